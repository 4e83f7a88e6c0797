#pragma once

// Immutable cache of (image id, dense vector) records.
//
// On-disk layout (all integers and floats little-endian, no padding):
//   [0, 8)    magic "T2PSEMB1"
//   [8, 12)   format version, u32 = 1
//   [12, 16)  dimension, u32 >= 1
//   [16, 24)  record count, u64
//   then count records of: id u64, dimension x f32
// Records are stored in ascending id order, which makes the serialization of
// a given record set canonical.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cfr/types.hpp"

namespace cfr {

inline constexpr std::string_view kStoreMagic = "T2PSEMB1";
inline constexpr std::uint32_t kStoreFormatVersion = 1;
inline constexpr std::size_t kStoreHeaderSize = 24;

struct EmbeddingRecord {
  ImageId id = 0;
  std::vector<float> vector;
};

struct StoreHeader {
  std::uint32_t format_version = kStoreFormatVersion;
  std::uint32_t dimension = 0;
  std::uint64_t count = 0;

  friend bool operator==(const StoreHeader&, const StoreHeader&) = default;
};

class EmbeddingStore {
 public:
  // Empty store of the given dimension.
  explicit EmbeddingStore(std::uint32_t dimension = 1);

  // Takes ownership of parallel arrays: ids[i] owns
  // vectors[i*dim, (i+1)*dim). Ids may be unsorted; they are sorted here.
  // Throws DuplicateId, DimensionMismatch, NonFiniteComponent.
  static EmbeddingStore from_flat(std::vector<ImageId> ids,
                                  std::vector<float> vectors,
                                  std::uint32_t dimension);

  std::uint32_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  StoreHeader header() const noexcept;

  // Ids in ascending order; position i corresponds to vector_at(i).
  std::span<const ImageId> ids() const noexcept { return ids_; }
  std::span<const float> vector_at(std::size_t position) const noexcept {
    return {data_.data() + position * dimension_, dimension_};
  }
  std::span<const float> flat() const noexcept { return data_; }

  std::optional<std::size_t> position_of(ImageId id) const;
  bool contains(ImageId id) const { return id_map_.contains(id); }

  // Bit-exact stored vector. Throws UnknownId.
  std::span<const float> get_vector(ImageId id) const;

  // FNV-1a 64 over the canonical serialized bytes.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

  // Header, ids and vector bits all equal.
  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

 private:
  friend EmbeddingStore open_store(std::istream& source);

  void index_ids();

  std::uint32_t dimension_;
  std::vector<ImageId> ids_;
  std::vector<float> data_;
  std::unordered_map<ImageId, std::size_t> id_map_;
  std::uint64_t fingerprint_ = 0;
};

// Canonical store from records in any order. Throws DuplicateId,
// DimensionMismatch (also for dimension 0), NonFiniteComponent.
EmbeddingStore build_store(std::span<const EmbeddingRecord> records,
                           std::uint32_t dimension);

// Feeds the canonical byte image of `store` to `sink` in chunks.
void serialize_store(const EmbeddingStore& store,
                     const std::function<void(std::string_view)>& sink);

// Returns the number of bytes written. Throws IoFailure.
std::uint64_t save_store(const EmbeddingStore& store, std::ostream& destination);
std::uint64_t save_store(const EmbeddingStore& store,
                         const std::filesystem::path& path);

// Validates magic, version, dimension, payload length, id order and
// component finiteness. Throws BadMagic, UnsupportedVersion, InvalidFormat,
// TruncatedPayload, TrailingBytes, UnsortedIds, NonFiniteComponent.
EmbeddingStore open_store(std::istream& source);
EmbeddingStore open_store(const std::filesystem::path& path);

// Parses the same layout but accepts ids in any order (the raw output of an
// encoder); the result is canonicalized through build rules, so duplicate
// ids raise DuplicateId rather than UnsortedIds.
EmbeddingStore read_unsorted_records(std::istream& source);

}  // namespace cfr
