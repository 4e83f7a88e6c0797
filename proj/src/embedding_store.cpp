#include "cfr/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "cfr/error.hpp"
#include "cfr/hashing.hpp"

namespace cfr {

namespace {

constexpr std::size_t kChunkRecords = 4096;

void check_dimension(std::uint32_t dimension) {
  if (dimension == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "dimension must be >= 1");
  }
}

struct ParsedRecords {
  std::uint32_t dimension = 0;
  std::vector<ImageId> ids;
  std::vector<float> data;
};

ParsedRecords parse_records(std::istream& in, bool require_sorted) {
  char header[kStoreHeaderSize];
  in.read(header, kStoreMagic.size());
  if (static_cast<std::size_t>(in.gcount()) != kStoreMagic.size() ||
      std::string_view(header, kStoreMagic.size()) != kStoreMagic) {
    throw Error(ErrorCode::kBadMagic, "not an embedding cache (expected T2PSEMB1)");
  }
  detail::read_exact(in, header + kStoreMagic.size(),
                     kStoreHeaderSize - kStoreMagic.size(), "header");
  const std::uint32_t version = detail::get_u32(header + 8);
  if (version != kStoreFormatVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, std::to_string(version));
  }
  ParsedRecords out;
  out.dimension = detail::get_u32(header + 12);
  if (out.dimension == 0) {
    throw Error(ErrorCode::kInvalidFormat, "dimension 0 in header");
  }
  const std::uint64_t count = detail::get_u64(header + 16);
  const std::uint64_t record_bytes = 8 + 4ULL * out.dimension;

  const std::int64_t remaining = detail::remaining_bytes(in);
  if (remaining >= 0) {
    if (static_cast<std::uint64_t>(remaining) / record_bytes < count) {
      throw Error(ErrorCode::kTruncatedPayload,
                  "header declares " + std::to_string(count) +
                      " records but only " + std::to_string(remaining) +
                      " payload bytes follow");
    }
    out.ids.reserve(count);
    out.data.reserve(count * out.dimension);
  } else {
    out.ids.reserve(std::min<std::uint64_t>(count, 1 << 20));
  }

  std::string buf;
  std::uint64_t done = 0;
  while (done < count) {
    const std::uint64_t n = std::min<std::uint64_t>(kChunkRecords, count - done);
    buf.resize(n * record_bytes);
    detail::read_exact(in, buf.data(), buf.size(), "records");
    const char* p = buf.data();
    for (std::uint64_t r = 0; r < n; ++r) {
      const ImageId id = detail::get_u64(p);
      p += 8;
      if (require_sorted && !out.ids.empty() && id <= out.ids.back()) {
        throw Error(ErrorCode::kUnsortedIds,
                    "record " + std::to_string(out.ids.size()) + " (id " +
                        std::to_string(id) + ") is not above its predecessor");
      }
      out.ids.push_back(id);
      for (std::uint32_t d = 0; d < out.dimension; ++d, p += 4) {
        out.data.push_back(detail::get_f32(p));
      }
    }
    done += n;
  }
  detail::expect_eof(in);
  return out;
}

}  // namespace

EmbeddingStore::EmbeddingStore(std::uint32_t dimension) : dimension_(dimension) {
  check_dimension(dimension);
  index_ids();
}

EmbeddingStore EmbeddingStore::from_flat(std::vector<ImageId> ids,
                                         std::vector<float> vectors,
                                         std::uint32_t dimension) {
  check_dimension(dimension);
  if (vectors.size() != ids.size() * dimension) {
    throw Error(ErrorCode::kDimensionMismatch,
                "expected " + std::to_string(ids.size() * dimension) +
                    " components, got " + std::to_string(vectors.size()));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::uint32_t d = 0; d < dimension; ++d) {
      if (!std::isfinite(vectors[i * dimension + d])) {
        throw Error(ErrorCode::kNonFiniteComponent, "id " + std::to_string(ids[i]));
      }
    }
  }

  EmbeddingStore store(dimension);
  if (std::is_sorted(ids.begin(), ids.end())) {
    store.ids_ = std::move(ids);
    store.data_ = std::move(vectors);
  } else {
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    store.ids_.reserve(ids.size());
    store.data_.resize(vectors.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      store.ids_.push_back(ids[order[i]]);
      std::memcpy(store.data_.data() + i * dimension,
                  vectors.data() + order[i] * dimension,
                  dimension * sizeof(float));
    }
  }
  const auto dup = std::adjacent_find(store.ids_.begin(), store.ids_.end());
  if (dup != store.ids_.end()) {
    throw Error(ErrorCode::kDuplicateId, std::to_string(*dup));
  }
  store.index_ids();
  return store;
}

void EmbeddingStore::index_ids() {
  id_map_.clear();
  id_map_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) id_map_.emplace(ids_[i], i);
  Fnv1a64 hash;
  serialize_store(*this, [&](std::string_view chunk) { hash.update(chunk); });
  fingerprint_ = hash.digest();
}

StoreHeader EmbeddingStore::header() const noexcept {
  return StoreHeader{kStoreFormatVersion, dimension_, ids_.size()};
}

std::optional<std::size_t> EmbeddingStore::position_of(ImageId id) const {
  const auto it = id_map_.find(id);
  if (it == id_map_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> EmbeddingStore::get_vector(ImageId id) const {
  const auto it = id_map_.find(id);
  if (it == id_map_.end()) {
    throw Error(ErrorCode::kUnknownId, std::to_string(id));
  }
  return vector_at(it->second);
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  return a.header() == b.header() && a.ids_ == b.ids_ &&
         (a.data_.empty() ||
          std::memcmp(a.data_.data(), b.data_.data(),
                      a.data_.size() * sizeof(float)) == 0);
}

EmbeddingStore build_store(std::span<const EmbeddingRecord> records,
                           std::uint32_t dimension) {
  check_dimension(dimension);
  std::vector<ImageId> ids;
  std::vector<float> flat;
  ids.reserve(records.size());
  flat.reserve(records.size() * dimension);
  for (const auto& rec : records) {
    if (rec.vector.size() != dimension) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "id " + std::to_string(rec.id) + ": expected " +
                      std::to_string(dimension) + ", got " +
                      std::to_string(rec.vector.size()));
    }
    ids.push_back(rec.id);
    flat.insert(flat.end(), rec.vector.begin(), rec.vector.end());
  }
  return EmbeddingStore::from_flat(std::move(ids), std::move(flat), dimension);
}

void serialize_store(const EmbeddingStore& store,
                     const std::function<void(std::string_view)>& sink) {
  std::string buf;
  buf.reserve(kStoreHeaderSize);
  buf.append(kStoreMagic);
  detail::put_u32(buf, kStoreFormatVersion);
  detail::put_u32(buf, store.dimension());
  detail::put_u64(buf, store.size());
  sink(buf);

  const std::size_t dim = store.dimension();
  const std::size_t record_bytes = 8 + 4 * dim;
  const auto ids = store.ids();
  for (std::size_t begin = 0; begin < ids.size(); begin += kChunkRecords) {
    const std::size_t end = std::min(ids.size(), begin + kChunkRecords);
    buf.clear();
    buf.reserve((end - begin) * record_bytes);
    for (std::size_t i = begin; i < end; ++i) {
      detail::put_u64(buf, ids[i]);
      for (float f : store.vector_at(i)) detail::put_f32(buf, f);
    }
    sink(buf);
  }
}

std::uint64_t save_store(const EmbeddingStore& store, std::ostream& destination) {
  std::uint64_t written = 0;
  serialize_store(store, [&](std::string_view chunk) {
    destination.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    if (!destination) {
      throw Error(ErrorCode::kIoFailure, "write failed after " +
                                            std::to_string(written) + " bytes");
    }
    written += chunk.size();
  });
  return written;
}

std::uint64_t save_store(const EmbeddingStore& store,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  const auto n = save_store(store, out);
  out.close();
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot close " + path.string());
  return n;
}

EmbeddingStore open_store(std::istream& source) {
  auto parsed = parse_records(source, /*require_sorted=*/true);
  return EmbeddingStore::from_flat(std::move(parsed.ids), std::move(parsed.data),
                                   parsed.dimension);
}

EmbeddingStore open_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  return open_store(in);
}

EmbeddingStore read_unsorted_records(std::istream& source) {
  auto parsed = parse_records(source, /*require_sorted=*/false);
  return EmbeddingStore::from_flat(std::move(parsed.ids), std::move(parsed.data),
                                   parsed.dimension);
}

}  // namespace cfr
