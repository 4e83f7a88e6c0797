#include "cfr/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>
#include <unordered_map>

#include "cfr/error.hpp"

namespace cfr {

namespace {

struct RanksBefore {
  bool operator()(const ScoredId& a, const ScoredId& b) const noexcept {
    return ranks_before(a, b);
  }
};

inline double dot_unchecked(const float* a, const float* b, std::size_t n) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

// Four rows at once. Each row keeps its own left-to-right accumulation, so
// every score is bit-identical to dot_unchecked; interleaving only hides the
// add latency.
inline void dot_rows4(const float* q, const float* const rows[4], std::size_t n,
                      double out[4]) noexcept {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double qi = q[i];
    a0 += qi * static_cast<double>(rows[0][i]);
    a1 += qi * static_cast<double>(rows[1][i]);
    a2 += qi * static_cast<double>(rows[2][i]);
    a3 += qi * static_cast<double>(rows[3][i]);
  }
  out[0] = a0;
  out[1] = a1;
  out[2] = a2;
  out[3] = a3;
}

// Runs body(chunk) for chunk in [0, chunks) across up to `threads` workers.
template <typename Body>
void for_each_chunk(std::size_t chunks, unsigned threads, Body&& body) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(threads, chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) body(c);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < chunks; c += workers) body(c);
    });
  }
}

}  // namespace

unsigned resolve_threads(unsigned requested) noexcept {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

double dot_score(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  return dot_unchecked(a.data(), b.data(), a.size());
}

TopKCollector::TopKCollector(std::size_t k) : k_(k) {
  buffer_.reserve(std::min<std::size_t>(2 * k, 1 << 16));
}

void TopKCollector::push(const ScoredId& entry) {
  if (k_ == 0) return;
  if (has_threshold_ && !ranks_before(entry, threshold_)) return;
  buffer_.push_back(entry);
  if (buffer_.size() >= 2 * k_) prune();
}

void TopKCollector::prune() {
  std::nth_element(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(k_ - 1),
                   buffer_.end(), RanksBefore{});
  buffer_.resize(k_);
  threshold_ = *std::max_element(buffer_.begin(), buffer_.end(), RanksBefore{});
  has_threshold_ = true;
}

RankedList TopKCollector::take_sorted() {
  RankedList out = take_unsorted();
  std::sort(out.begin(), out.end(), RanksBefore{});
  return out;
}

RankedList TopKCollector::take_unsorted() {
  if (buffer_.size() > k_) prune();
  RankedList out = std::move(buffer_);
  buffer_.clear();
  has_threshold_ = false;
  return out;
}

RankedList top_k_scan(std::span<const float> query, const EmbeddingStore& store,
                      std::size_t k, std::optional<std::span<const ImageId>> candidates,
                      ScanStats* stats, ScanOptions options) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be positive");
  if (query.size() != store.dimension()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query has " + std::to_string(query.size()) +
                    " components, store dimension is " +
                    std::to_string(store.dimension()));
  }
  for (float f : query) {
    if (!std::isfinite(f)) throw Error(ErrorCode::kNonFiniteComponent, "query");
  }

  // Positions to score, ascending.
  std::vector<std::size_t> positions;
  std::size_t unknown = 0;
  const bool restricted = candidates.has_value();
  if (restricted) {
    std::vector<ImageId> ids(candidates->begin(), candidates->end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    positions.reserve(ids.size());
    for (ImageId id : ids) {
      if (auto pos = store.position_of(id)) {
        positions.push_back(*pos);
      } else {
        ++unknown;
      }
    }
  }
  const std::size_t total = restricted ? positions.size() : store.size();
  const std::size_t dim = store.dimension();
  const float* q = query.data();
  const float* base = store.flat().data();
  const auto ids = store.ids();

  const std::size_t chunks = (total + kScanChunk - 1) / kScanChunk;
  std::vector<RankedList> partial(chunks);
  for_each_chunk(chunks, resolve_threads(options.threads), [&](std::size_t c) {
    TopKCollector top(k);
    const std::size_t begin = c * kScanChunk;
    const std::size_t end = std::min(total, begin + kScanChunk);
    std::size_t i = begin;
    for (; i + 4 <= end; i += 4) {
      std::size_t pos[4];
      const float* rows[4];
      for (int j = 0; j < 4; ++j) {
        pos[j] = restricted ? positions[i + j] : i + j;
        rows[j] = base + pos[j] * dim;
      }
      double scores[4];
      dot_rows4(q, rows, dim, scores);
      for (int j = 0; j < 4; ++j) top.push({ids[pos[j]], scores[j]});
    }
    for (; i < end; ++i) {
      const std::size_t pos = restricted ? positions[i] : i;
      top.push({ids[pos], dot_unchecked(q, base + pos * dim, dim)});
    }
    partial[c] = top.take_unsorted();
  });

  RankedList result;
  if (chunks == 1) {
    result = std::move(partial.front());
    std::sort(result.begin(), result.end(), RanksBefore{});
  } else {
    TopKCollector merged(k);
    for (const auto& part : partial) {
      for (const auto& e : part) merged.push(e);
    }
    result = merged.take_sorted();
  }
  if (stats) {
    stats->scanned = total;
    stats->unknown_skipped = unknown;
  }
  return result;
}

RankedList fuse_max(std::span<const RankedList> lists) {
  std::unordered_map<ImageId, double> best;
  for (const auto& list : lists) {
    for (const auto& e : list) {
      auto [it, inserted] = best.try_emplace(e.id, e.score);
      if (!inserted && e.score > it->second) it->second = e.score;
    }
  }
  RankedList out;
  out.reserve(best.size());
  for (const auto& [id, score] : best) out.push_back({id, score});
  std::sort(out.begin(), out.end(), RanksBefore{});
  return out;
}

bool is_valid_ranking(std::span<const ScoredId> list) {
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!std::isfinite(list[i].score)) return false;
    if (i > 0 && !ranks_before(list[i - 1], list[i])) return false;
  }
  // Adjacent strict ordering rules out equal (score, id) pairs but not a
  // repeated id with two different scores.
  std::vector<ImageId> ids;
  ids.reserve(list.size());
  for (const auto& e : list) ids.push_back(e.id);
  std::sort(ids.begin(), ids.end());
  return std::adjacent_find(ids.begin(), ids.end()) == ids.end();
}

}  // namespace cfr
