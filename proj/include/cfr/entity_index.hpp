#pragma once

// Entity -> top-k image postings, built offline against one embedding cache.
//
// On-disk layout (little-endian):
//   magic "T2PSEIX1", u32 version = 1, u64 store fingerprint, u32 k_build,
//   u64 entry count, then per entry in ascending UTF-8 byte order of keys:
//   u32 key length, key bytes, u32 postings length L,
//   L x (u64 image id, f32 score).

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfr/embedding_store.hpp"
#include "cfr/ranking.hpp"
#include "cfr/types.hpp"

namespace cfr {

inline constexpr std::string_view kIndexMagic = "T2PSEIX1";
inline constexpr std::uint32_t kIndexFormatVersion = 1;

// A normalized entity string: Unicode full case folding, runs of whitespace
// collapsed to one ASCII space, leading/trailing whitespace removed.
// Never empty.
class EntityKey {
 public:
  // Throws EmptyAfterNormalization.
  static EntityKey normalize(std::string_view raw);
  static std::optional<EntityKey> try_normalize(std::string_view raw);

  const std::string& text() const noexcept { return text_; }

  friend bool operator==(const EntityKey&, const EntityKey&) = default;
  friend std::strong_ordering operator<=>(const EntityKey&,
                                          const EntityKey&) = default;

 private:
  explicit EntityKey(std::string text) : text_(std::move(text)) {}
  std::string text_;
};

// The normalization rule on plain strings; may return an empty string.
std::string normalize_entity_text(std::string_view raw);

struct EntityEmbedding {
  EntityKey key;
  std::vector<float> vector;
};

// Postings scores are the f32 values persisted in the index file; the list
// is ordered by ranks_before on those values.
using EntityPostings = RankedList;

class EntityIndex {
 public:
  EntityIndex(std::uint64_t store_fingerprint, std::uint32_t k_build);

  std::uint64_t store_fingerprint() const noexcept { return store_fingerprint_; }
  std::uint32_t k_build() const noexcept { return k_build_; }
  std::size_t size() const noexcept { return entries_.size(); }

  // nullptr means Missing: the entity was never indexed.
  const EntityPostings* lookup(const EntityKey& key) const;
  // Normalizes first; strings that normalize to empty are Missing.
  const EntityPostings* lookup(std::string_view raw) const;

  const std::map<EntityKey, EntityPostings>& entries() const noexcept {
    return entries_;
  }

  // Adds or replaces one entry. Scores are rounded to f32 and the list is
  // re-sorted under ranks_before. Throws InvalidArgument if the postings are
  // longer than k_build, repeat an id or carry a non-finite score.
  void insert(EntityKey key, EntityPostings postings);

  friend bool operator==(const EntityIndex&, const EntityIndex&) = default;

 private:
  std::uint64_t store_fingerprint_;
  std::uint32_t k_build_;
  std::map<EntityKey, EntityPostings> entries_;
};

struct IndexBuildReport {
  std::size_t entities_scanned = 0;
  // Build input repeated a key; the last occurrence was kept.
  std::size_t duplicate_keys = 0;
  // Extend input named a key already in the index; it was left untouched.
  std::size_t existing_keys_skipped = 0;
};

// Postings for one entity vector: the top-k_build ids of top_k_scan, scores
// rounded to f32 and re-sorted under ranks_before.
EntityPostings compute_postings(std::span<const float> entity_vector,
                                const EmbeddingStore& store, std::uint32_t k_build);

// Throws DimensionMismatch, EmptyStore, InvalidArgument (k_build = 0).
EntityIndex build_entity_index(std::span<const EntityEmbedding> entities,
                               const EmbeddingStore& store, std::uint32_t k_build,
                               IndexBuildReport* report = nullptr,
                               ScanOptions options = {});

// New value with the unseen keys added. Throws FingerprintMismatch,
// DimensionMismatch.
EntityIndex extend_index(const EntityIndex& index,
                         std::span<const EntityEmbedding> new_entities,
                         const EmbeddingStore& store,
                         IndexBuildReport* report = nullptr,
                         ScanOptions options = {});

// Throws FingerprintMismatch unless `index` was built against `store`.
void check_compatible(const EntityIndex& index, const EmbeddingStore& store);

std::uint64_t save_index(const EntityIndex& index, std::ostream& destination);
std::uint64_t save_index(const EntityIndex& index,
                         const std::filesystem::path& path);

// Throws BadMagic, UnsupportedVersion, TruncatedPayload, TrailingBytes,
// InvalidFormat (unsorted or unnormalized keys, invalid postings).
EntityIndex open_index(std::istream& source);
EntityIndex open_index(const std::filesystem::path& path);

}  // namespace cfr
