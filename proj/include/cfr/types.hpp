#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cfr {

using ImageId = std::uint64_t;
using QueryId = std::uint64_t;

struct ScoredId {
  ImageId id = 0;
  double score = 0.0;

  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

// The single ordering used for every ranking: higher score first, ties by
// smaller id. It is a strict total order over entries with distinct ids.
constexpr bool ranks_before(const ScoredId& a, const ScoredId& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

// Ordered (id, score) pairs, sorted by ranks_before, ids unique.
using RankedList = std::vector<ScoredId>;

// True iff `list` is sorted under ranks_before, has unique ids and finite
// scores.
bool is_valid_ranking(std::span<const ScoredId> list);

}  // namespace cfr
