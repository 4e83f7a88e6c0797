#pragma once

// Test-only reference implementations. Deliberately naive: score everything,
// sort everything, and never touch the library's selection code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "cfr/embedding_store.hpp"
#include "cfr/types.hpp"

namespace cfr::testing {

inline double oracle_dot(const std::vector<float>& a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return s;
}

inline bool oracle_order(const ScoredId& a, const ScoredId& b) {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

// Every id scored, fully sorted, first k kept.
inline RankedList brute_force_top_k(const std::vector<float>& query,
                                    const EmbeddingStore& store, std::size_t k,
                                    const std::set<ImageId>* only = nullptr) {
  RankedList all;
  for (ImageId id : store.ids()) {
    if (only && !only->contains(id)) continue;
    all.push_back({id, oracle_dot(query, store.get_vector(id))});
  }
  std::sort(all.begin(), all.end(), oracle_order);
  if (all.size() > k) all.resize(k);
  return all;
}

inline std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dim,
                                        bool unit = false) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = normal(rng);
  if (unit) {
    double n = 0.0;
    for (float x : v) n += double(x) * x;
    n = std::sqrt(n);
    for (auto& x : v) x = static_cast<float>(x / n);
  }
  return v;
}

// `count` records with distinct random ids (not contiguous, not sorted).
inline std::vector<EmbeddingRecord> random_records(std::mt19937_64& rng, std::size_t count,
                                                   std::size_t dim, bool unit = false) {
  std::set<ImageId> used;
  std::uniform_int_distribution<ImageId> id_dist(1, 50 * count + 100);
  std::vector<EmbeddingRecord> out;
  out.reserve(count);
  while (out.size() < count) {
    const ImageId id = id_dist(rng);
    if (!used.insert(id).second) continue;
    out.push_back({id, random_vector(rng, dim, unit)});
  }
  return out;
}

inline EmbeddingStore random_store(std::uint64_t seed, std::size_t count, std::size_t dim,
                                   bool unit = false) {
  std::mt19937_64 rng(seed);
  return build_store(random_records(rng, count, dim, unit),
                     static_cast<std::uint32_t>(dim));
}

}  // namespace cfr::testing
