#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "cfr/ranking.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace cfr {
namespace {

using testing::code_of;

EmbeddingStore tiny_store() {
  return build_store(std::vector<EmbeddingRecord>{{1, {1, 0}}, {2, {0, 1}}, {3, {1, 1}}}, 2);
}

// Components drawn from {-1, 0, 1}: many exact score ties.
EmbeddingStore quantized_store(std::uint64_t seed, std::size_t count, std::size_t dim) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tri(-1, 1);
  std::vector<EmbeddingRecord> recs;
  for (std::size_t i = 0; i < count; ++i) {
    EmbeddingRecord r{static_cast<ImageId>(count * 3 - i * 2), std::vector<float>(dim)};
    for (auto& x : r.vector) x = static_cast<float>(tri(rng));
    recs.push_back(std::move(r));
  }
  return build_store(recs, static_cast<std::uint32_t>(dim));
}

TEST(DotScore, Examples) {
  const std::vector<float> a{1, 0}, b{0, 1}, c{3, 4}, d{1, 2, 3}, e{4, -1, 2};
  EXPECT_EQ(dot_score(a, b), 0.0);
  EXPECT_EQ(dot_score(c, c), 25.0);
  EXPECT_EQ(dot_score(d, e), 8.0);
  const std::vector<float> f{1, 2}, g{3, 4};
  EXPECT_EQ(dot_score(f, g), 11.0);
  EXPECT_EQ(code_of([&] { dot_score(a, d); }), ErrorCode::kDimensionMismatch);
}

TEST(DotScore, SymmetricAndExactOnIntegers) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> small(-20, 20);
  for (int t = 0; t < 200; ++t) {
    std::vector<float> a(17), b(17);
    long long expect = 0;
    for (int i = 0; i < 17; ++i) {
      const int x = small(rng), y = small(rng);
      a[i] = float(x);
      b[i] = float(y);
      expect += x * y;
    }
    EXPECT_EQ(dot_score(a, b), double(expect));
    EXPECT_EQ(dot_score(a, b), dot_score(b, a));
  }
}

TEST(TopKScan, Examples) {
  const auto store = tiny_store();
  const std::vector<float> q{1, 1};
  const auto top2 = top_k_scan(q, store, 2);
  ASSERT_EQ(top2.size(), 2u);
  EXPECT_EQ(top2[0], (ScoredId{3, 2.0}));
  EXPECT_EQ(top2[1], (ScoredId{1, 1.0}));  // tie with id 2, smaller id wins

  const auto all = top_k_scan(q, store, 10);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[2], (ScoredId{2, 1.0}));
}

TEST(TopKScan, RejectsBadArguments) {
  const auto store = tiny_store();
  const std::vector<float> q{1, 1}, q3{1, 1, 1};
  const std::vector<float> qnan{std::numeric_limits<float>::quiet_NaN(), 0};
  EXPECT_EQ(code_of([&] { top_k_scan(q, store, 0); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { top_k_scan(q3, store, 1); }), ErrorCode::kDimensionMismatch);
  EXPECT_EQ(code_of([&] { top_k_scan(qnan, store, 1); }), ErrorCode::kNonFiniteComponent);
}

TEST(TopKScan, EmptyStore) {
  const auto store = build_store({}, 2);
  const std::vector<float> q{1, 1};
  EXPECT_TRUE(top_k_scan(q, store, 5).empty());
}

TEST(TopKScan, MatchesBruteForceWithTies) {
  // Crosses several scan chunks; heavy ties exercise the id tie-break.
  const auto store = quantized_store(3, 3 * kScanChunk + 123, 6);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> tri(-1, 1);
  for (std::size_t k : {1u, 7u, 100u, 5000u, 60000u}) {
    std::vector<float> q(6);
    for (auto& x : q) x = float(tri(rng));
    const auto expected = testing::brute_force_top_k(q, store, k);
    EXPECT_EQ(top_k_scan(q, store, k), expected) << "k=" << k;
  }
}

TEST(TopKScan, MatchesBruteForceRandom) {
  const auto store = testing::random_store(8, 20000, 16);
  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const auto q = testing::random_vector(rng, 16);
    const auto got = top_k_scan(q, store, 250);
    EXPECT_TRUE(is_valid_ranking(got));
    EXPECT_EQ(got, testing::brute_force_top_k(q, store, 250));
  }
}

TEST(TopKScan, PrefixNesting) {
  const auto store = quantized_store(12, 5000, 4);
  const std::vector<float> q{1, -1, 0, 1};
  const auto big = top_k_scan(q, store, 900);
  for (std::size_t k : {1u, 10u, 333u, 899u}) {
    const auto small = top_k_scan(q, store, k);
    EXPECT_TRUE(std::equal(small.begin(), small.end(), big.begin())) << k;
  }
}

TEST(TopKScan, ThreadCountDoesNotChangeResult) {
  const auto store = quantized_store(21, 4 * kScanChunk + 7, 5);
  const std::vector<float> q{1, 0, -1, 1, 1};
  const auto reference = top_k_scan(q, store, 3000, std::nullopt, nullptr, {1});
  for (unsigned threads : {2u, 3u, 8u, 0u}) {
    EXPECT_EQ(top_k_scan(q, store, 3000, std::nullopt, nullptr, {threads}), reference);
  }
}

TEST(TopKScan, CandidateRestriction) {
  const auto store = testing::random_store(30, 6000, 8);
  std::mt19937_64 rng(31);
  std::vector<ImageId> candidates;
  std::set<ImageId> candidate_set;
  for (ImageId id : store.ids()) {
    if (rng() % 5 == 0) {
      candidates.push_back(id);
      candidate_set.insert(id);
    }
  }
  // Duplicates and unknown ids in the request.
  candidates.push_back(candidates.front());
  candidates.push_back(0);
  candidates.push_back(std::numeric_limits<ImageId>::max());
  std::shuffle(candidates.begin(), candidates.end(), rng);

  const auto q = testing::random_vector(rng, 8);
  ScanStats stats;
  const auto got = top_k_scan(q, store, 400, std::span<const ImageId>(candidates), &stats);
  EXPECT_EQ(got, testing::brute_force_top_k(q, store, 400, &candidate_set));
  EXPECT_EQ(stats.scanned, candidate_set.size());
  EXPECT_EQ(stats.unknown_skipped, 2u);
  for (const auto& e : got) EXPECT_TRUE(candidate_set.contains(e.id));
}

TEST(TopKScan, EmptyCandidateList) {
  const auto store = tiny_store();
  const std::vector<float> q{1, 1};
  const std::vector<ImageId> none;
  EXPECT_TRUE(top_k_scan(q, store, 3, std::span<const ImageId>(none)).empty());
}

TEST(TopKCollector, AgreesWithSort) {
  std::mt19937_64 rng(40);
  std::uniform_int_distribution<int> score(0, 50);
  for (std::size_t k : {1u, 2u, 17u, 500u}) {
    std::vector<ScoredId> all;
    TopKCollector collector(k);
    for (ImageId id = 1; id <= 2000; ++id) {
      ScoredId e{(id * 7919) % 10007, double(score(rng))};
      all.push_back(e);
      collector.push(e);
    }
    std::sort(all.begin(), all.end(), testing::oracle_order);
    all.resize(k);
    EXPECT_EQ(collector.take_sorted(), all);
  }
}

TEST(FuseMax, Examples) {
  const std::vector<RankedList> lists{{{1, 0.9}, {2, 0.5}}, {{2, 0.8}, {3, 0.4}}};
  const RankedList expect{{1, 0.9}, {2, 0.8}, {3, 0.4}};
  EXPECT_EQ(fuse_max(lists), expect);

  const std::vector<RankedList> one{{{5, 0.3}, {4, 0.1}}};
  EXPECT_EQ(fuse_max(one), one[0]);
  EXPECT_TRUE(fuse_max({}).empty());
}

TEST(FuseMax, MatchesPerIdMaximum) {
  std::mt19937_64 rng(50);
  std::uniform_int_distribution<ImageId> id(1, 200);
  std::uniform_int_distribution<int> score(-30, 30);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RankedList> lists(5);
    std::map<ImageId, double> best;
    for (auto& list : lists) {
      std::set<ImageId> used;
      for (int i = 0; i < 40; ++i) {
        const ImageId x = id(rng);
        if (!used.insert(x).second) continue;
        const double s = score(rng) / 4.0;
        list.push_back({x, s});
        auto [it, fresh] = best.emplace(x, s);
        if (!fresh) it->second = std::max(it->second, s);
      }
      std::sort(list.begin(), list.end(), testing::oracle_order);
    }
    RankedList expect;
    for (auto [x, s] : best) expect.push_back({x, s});
    std::sort(expect.begin(), expect.end(), testing::oracle_order);
    EXPECT_EQ(fuse_max(lists), expect);
  }
}

TEST(IsValidRanking, DetectsViolations) {
  EXPECT_TRUE(is_valid_ranking(RankedList{}));
  EXPECT_TRUE(is_valid_ranking(RankedList{{1, 2.0}, {0, 1.0}, {4, 1.0}}));
  EXPECT_FALSE(is_valid_ranking(RankedList{{4, 1.0}, {1, 1.0}}));
  EXPECT_FALSE(is_valid_ranking(RankedList{{1, 1.0}, {2, 3.0}}));
  EXPECT_FALSE(is_valid_ranking(RankedList{{1, 2.0}, {1, 1.0}}));
  EXPECT_FALSE(is_valid_ranking(RankedList{{1, std::nan("")}}));
}

}  // namespace
}  // namespace cfr
