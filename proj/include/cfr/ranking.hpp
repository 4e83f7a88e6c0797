#pragma once

// Exact dot-product scoring and deterministic top-k selection.

#include <cstddef>
#include <optional>
#include <span>

#include "cfr/embedding_store.hpp"
#include "cfr/types.hpp"

namespace cfr {

// Σ a[i]*b[i], accumulated left to right in double. Throws DimensionMismatch.
double dot_score(std::span<const float> a, std::span<const float> b);

struct ScanOptions {
  // Worker threads for one scan; 0 means hardware concurrency. The result is
  // independent of this value.
  unsigned threads = 1;
};

struct ScanStats {
  std::size_t scanned = 0;
  std::size_t unknown_skipped = 0;
};

// Positions are split into chunks of this many entries regardless of the
// thread count, so the merge sequence never depends on scheduling.
inline constexpr std::size_t kScanChunk = 16384;

// The min(k, |scanned|) best entries under ranks_before. With `candidates`,
// only those ids are scored; ids absent from the store are skipped and
// counted in stats->unknown_skipped, duplicates are scored once.
// Throws DimensionMismatch, NonFiniteComponent (query), InvalidArgument (k=0).
RankedList top_k_scan(std::span<const float> query, const EmbeddingStore& store,
                      std::size_t k,
                      std::optional<std::span<const ImageId>> candidates = std::nullopt,
                      ScanStats* stats = nullptr, ScanOptions options = {});

// Each id once, with its maximum score over all lists, sorted by
// ranks_before.
RankedList fuse_max(std::span<const RankedList> lists);

// Bounded selection of the best k entries under ranks_before.
class TopKCollector {
 public:
  explicit TopKCollector(std::size_t k);

  void push(const ScoredId& entry);
  // Sorted best-first; leaves the collector empty.
  RankedList take_sorted();
  // The best k in no particular order; leaves the collector empty.
  RankedList take_unsorted();

 private:
  void prune();

  std::size_t k_;
  // Unordered candidates. Once pruned, threshold_ is the k-th best seen so
  // far and anything not ranking before it can be dropped on arrival.
  std::vector<ScoredId> buffer_;
  ScoredId threshold_;
  bool has_threshold_ = false;
};

unsigned resolve_threads(unsigned requested) noexcept;

}  // namespace cfr
