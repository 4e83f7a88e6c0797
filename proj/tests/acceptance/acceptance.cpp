// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Pass criterion numbers as arguments
// to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cfr/cfr.hpp"
#include "cli.hpp"
#include "independent_scorer.hpp"
#include "oracles.hpp"

namespace {

using namespace cfr;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Every batch run here is audited for |candidates| <= entities_found * k_query.
struct PoolAudit {
  std::size_t batches = 0;
  std::size_t queries = 0;
  std::size_t violations = 0;

  void check(const std::vector<QueryResult>& results, std::size_t k_query) {
    ++batches;
    for (const auto& r : results) {
      ++queries;
      if (r.candidates.ids.size() > r.candidates.entities_found * k_query) ++violations;
    }
  }
} pool_audit;

std::vector<QueryResult> audited_batch(std::span<const QueryDocument> queries,
                                       const EntityIndex& index, const EmbeddingStore& store,
                                       RetrievalConfig config) {
  auto results = batch_query(queries, &index, store, config);
  pool_audit.check(results, config.k_query);
  return results;
}

// Only the entities some query mentions need postings.
std::vector<EntityEmbedding> referenced_entities(const SynthCorpus& corpus) {
  std::set<std::string> wanted;
  for (const auto& q : corpus.queries) {
    for (const auto& e : q.entities) wanted.insert(normalize_entity_text(e));
  }
  std::vector<EntityEmbedding> out;
  for (auto& e : to_entity_embeddings(corpus.entities)) {
    if (wanted.contains(e.key.text())) out.push_back(std::move(e));
  }
  return out;
}

std::vector<QueryDocument> documents(const SynthCorpus& corpus) {
  return resolve_queries(corpus.queries, {&corpus.summaries, std::nullopt});
}

Outcome topk_oracle() {
  const auto store = testing::random_store(101, 100000, 64);
  std::mt19937_64 rng(102);
  std::size_t mismatched = 0;
  double scan_s = 0.0;
  for (int q = 0; q < 100; ++q) {
    const auto query = testing::random_vector(rng, 64);
    const auto t0 = Clock::now();
    const auto got = top_k_scan(query, store, 1000);
    scan_s += std::chrono::duration<double>(Clock::now() - t0).count();
    if (got != testing::brute_force_top_k(query, store, 1000)) ++mismatched;
  }
  return {mismatched == 0,
          fmt("100000 x 64, 100 queries, k=1000: %zu mismatching rankings, scan %.2f s",
              mismatched, scan_s)};
}

RunFile run_of(QueryId q, const std::vector<ImageId>& docs) {
  RunFile run{"fixture", {}};
  for (std::size_t i = 0; i < docs.size(); ++i) {
    run.queries[q].push_back({docs[i], std::uint32_t(i + 1), -double(i)});
  }
  return run;
}

Outcome metric_correctness() {
  std::vector<std::string> failures;
  auto expect = [&](const char* what, double got, double want) {
    if (!(std::abs(got - want) <= 1e-9)) failures.push_back(fmt("%s=%.12f", what, got));
  };
  expect("rank4 MRR@10", mrr_at_k(run_of(1, {1, 2, 3, 40}), {{1, {40}}}, 10), 0.25);
  expect("partial R@1000", recall_at_k(run_of(1, {10, 99, 20}), {{1, {10, 20, 30}}}, 1000),
         2.0 / 3.0);
  expect("first MRR@10", mrr_at_k(run_of(1, {40, 2}), {{1, {40}}}, 10), 1.0);
  expect("miss MRR@10", mrr_at_k(run_of(1, {5}), {{1, {40}}}, 10), 0.0);
  expect("absent query", recall_at_k(run_of(1, {40}), {{1, {40}}, {2, {3}}}, 1000), 0.5);

  // Randomized 50-query fixture scored through text, by an unrelated scorer.
  std::mt19937_64 rng(200);
  std::ostringstream qrels_text;
  RunFile run{"rnd", {}};
  for (QueryId q = 1; q <= 50; ++q) {
    std::set<ImageId> rel;
    while (rel.size() < 1 + rng() % 8) rel.insert(rng() % 2000);
    for (ImageId d : rel) qrels_text << q << " 0 " << d << " 1\n";
    if (q % 7 == 0) continue;
    std::vector<ImageId> docs(2000);
    for (ImageId d = 0; d < 2000; ++d) docs[d] = d;
    std::shuffle(docs.begin(), docs.end(), rng);
    docs.resize(50 + rng() % 1500);
    for (std::size_t i = 0; i < docs.size(); ++i) {
      run.queries[q].push_back({docs[i], std::uint32_t(i + 1), -double(i)});
    }
  }
  std::ostringstream run_text;
  write_run(run, run_text);
  std::istringstream run_in(run_text.str()), qrels_in(qrels_text.str());
  const RunFile loaded = load_run(run_in);
  const Qrels qrels = load_qrels(qrels_in);
  const auto oracle = testing::independent_score(run_text.str(), qrels_text.str(), 1000, 10);
  expect("random R@1000", recall_at_k(loaded, qrels, 1000), oracle.recall);
  expect("random MRR@10", mrr_at_k(loaded, qrels, 10), oracle.mrr);

  std::string detail = failures.empty() ? "hand fixtures and randomized 50-query fixture within 1e-9"
                                        : "mismatch:";
  for (const auto& f : failures) detail += " " + f;
  return {failures.empty(), detail};
}

Outcome candidate_restriction() {
  SynthCorpusSpec spec;
  spec.image_count = 5000;
  spec.query_count = 50;
  spec.vocab_size = 200;
  spec.seed = 300;
  const auto corpus = generate_synth_corpus(spec);
  const auto index = build_entity_index(referenced_entities(corpus), corpus.images, 500);
  const auto docs = documents(corpus);
  RetrievalConfig config;
  config.k_query = 500;
  config.depth = 1000;
  const auto results = audited_batch(docs, index, corpus.images, config);
  std::size_t mismatched = 0, compared = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& c = results[i].candidates.ids;
    const std::set<ImageId> pool(c.begin(), c.end());
    // Exhaustive scan of every image, then filtered to the pool.
    RankedList filtered;
    for (const auto& e : testing::brute_force_top_k(*docs[i].summary, corpus.images,
                                                    corpus.images.size())) {
      if (pool.contains(e.id)) filtered.push_back(e);
    }
    if (filtered.size() > config.depth) filtered.resize(config.depth);
    compared += filtered.size();
    if (results[i].ranking != filtered) ++mismatched;
  }
  return {mismatched == 0, fmt("5000 images, 50 queries, %zu ranked entries compared, %zu "
                               "mismatching rankings",
                               compared, mismatched)};
}

// Shared by the planted-target and trend criteria.
struct PlantedSetup {
  SynthCorpus clean;
  SynthCorpus noisy;
  std::optional<EntityIndex> index;
};
std::optional<PlantedSetup> planted;

PlantedSetup& planted_setup() {
  if (planted) return *planted;
  SynthCorpusSpec spec;  // 50,000 images, 200 queries, vocab 1000, dim 64
  spec.noise_scale = 0.0;
  auto clean = generate_synth_corpus(spec);
  spec.noise_scale = 0.05;
  auto noisy = generate_synth_corpus(spec);
  if (!(clean.images == noisy.images)) throw std::runtime_error("noise changed the images");
  // k_build covers the whole cache so that k_query = image_count is legal.
  const auto t0 = Clock::now();
  auto index = build_entity_index(referenced_entities(clean), clean.images,
                                  static_cast<std::uint32_t>(clean.images.size()));
  std::cerr << "  planted index: " << index.size() << " entities in "
            << std::chrono::duration<double>(Clock::now() - t0).count() << " s\n";
  planted.emplace(PlantedSetup{std::move(clean), std::move(noisy), std::move(index)});
  return *planted;
}

Outcome planted_target() {
  auto& s = planted_setup();
  RetrievalConfig exhaustive;
  exhaustive.k_query = s.clean.images.size();
  exhaustive.depth = 1000;
  exhaustive.scan.threads = 0;
  const auto clean_docs = documents(s.clean);
  const RunFile clean_run =
      to_run_file(audited_batch(clean_docs, *s.index, s.clean.images, exhaustive), "clean");
  const double mrr = mrr_at_k(clean_run, s.clean.qrels, 10);

  RetrievalConfig narrow = exhaustive;
  narrow.k_query = 1000;
  const auto noisy_docs = documents(s.noisy);
  const RunFile noisy_run =
      to_run_file(audited_batch(noisy_docs, *s.index, s.noisy.images, narrow), "noisy");
  const double recall = recall_at_k(noisy_run, s.noisy.qrels, 1000);
  return {mrr == 1.0 && recall >= 0.99,
          fmt("noise 0, k_query=%zu: MRR@10 = %.6f; noise 0.05, k_query=1000: R@1000 = %.4f",
              exhaustive.k_query, mrr, recall)};
}

Outcome trend_mechanism() {
  auto& s = planted_setup();
  const auto docs = documents(s.noisy);
  std::vector<std::vector<ImageId>> previous(docs.size());
  std::vector<double> coverage;
  std::size_t subset_violations = 0;
  for (std::size_t k : {100u, 1000u, 10000u}) {
    RetrievalConfig config;
    config.k_query = k;
    config.depth = 1000;
    config.scan.threads = 0;
    const auto results = audited_batch(docs, *s.index, s.noisy.images, config);
    std::size_t hits = 0, relevant = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& ids = results[i].candidates.ids;
      if (!std::includes(ids.begin(), ids.end(), previous[i].begin(), previous[i].end())) {
        ++subset_violations;
      }
      for (ImageId r : s.noisy.qrels.at(results[i].query_id)) {
        ++relevant;
        hits += std::binary_search(ids.begin(), ids.end(), r);
      }
      previous[i] = ids;
    }
    coverage.push_back(double(hits) / double(relevant));
  }
  const bool monotone = coverage[0] <= coverage[1] && coverage[1] <= coverage[2];
  return {monotone && subset_violations == 0,
          fmt("relevant coverage at k_query 100/1000/10000 = %.4f/%.4f/%.4f, "
              "%zu subset violations",
              coverage[0], coverage[1], coverage[2], subset_violations)};
}

Outcome serialization() {
  std::vector<std::string> failures;
  SynthCorpusSpec spec;
  spec.image_count = 20000;
  spec.query_count = 50;
  spec.vocab_size = 300;
  spec.seed = 700;
  const auto corpus = generate_synth_corpus(spec);

  std::ostringstream cache_a(std::ios::binary);
  save_store(corpus.images, cache_a);
  std::istringstream cache_in(cache_a.str(), std::ios::binary);
  const auto reopened = open_store(cache_in);
  std::ostringstream cache_b(std::ios::binary);
  save_store(reopened, cache_b);
  if (!(reopened == corpus.images)) failures.push_back("reopened cache differs");
  if (cache_a.str() != cache_b.str()) failures.push_back("cache bytes differ after round trip");

  auto entities = to_entity_embeddings(corpus.entities);
  const auto index = build_entity_index(entities, corpus.images, 200);
  std::ostringstream index_a(std::ios::binary);
  save_index(index, index_a);
  std::istringstream index_in(index_a.str(), std::ios::binary);
  const auto index_back = open_index(index_in);
  std::ostringstream index_b(std::ios::binary);
  save_index(index_back, index_b);
  if (!(index_back == index)) failures.push_back("reopened index differs");
  if (index_a.str() != index_b.str()) failures.push_back("index bytes differ after round trip");

  std::mt19937_64 rng(701);
  for (int trial = 0; trial < 3; ++trial) {
    std::shuffle(entities.begin(), entities.end(), rng);
    std::ostringstream shuffled(std::ios::binary);
    save_index(build_entity_index(entities, corpus.images, 200), shuffled);
    if (shuffled.str() != index_a.str()) failures.push_back("insertion order changed bytes");
  }
  std::string detail = fmt("cache %zu bytes, index %zu bytes, 3 shuffled rebuilds",
                           cache_a.str().size(), index_a.str().size());
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

Outcome pool_bound() {
  // Ten entities along orthogonal axes, each owning a cluster of 10,000
  // images; 20,000 more images live on axes no entity uses.
  constexpr std::uint32_t dim = 16;
  std::vector<ImageId> ids;
  std::vector<float> flat;
  std::mt19937_64 rng(600);
  std::uniform_real_distribution<float> pos(0.1f, 1.0f), any(-1.0f, 1.0f);
  ImageId next = 1;
  for (std::uint32_t axis = 0; axis < 12; ++axis) {
    for (int i = 0; i < 10000; ++i) {
      std::vector<float> v(dim, 0.0f);
      if (axis < 10) {
        v[axis] = pos(rng);
      }
      for (std::uint32_t d = 10; d < dim; ++d) v[d] = any(rng);
      ids.push_back(next++);
      flat.insert(flat.end(), v.begin(), v.end());
    }
  }
  const auto store = EmbeddingStore::from_flat(std::move(ids), std::move(flat), dim);
  std::vector<EntityEmbedding> entities;
  QueryDocument query{1, {}, std::vector<float>(dim, 0.0f)};
  for (std::uint32_t axis = 0; axis < 10; ++axis) {
    std::vector<float> v(dim, 0.0f);
    v[axis] = 1.0f;
    const std::string name = fmt("Axis %u", axis);
    entities.push_back({EntityKey::normalize(name), v});
    query.entities.push_back(name);
    (*query.summary)[axis] = 1.0f;
  }
  const auto index = build_entity_index(entities, store, 10000);
  RetrievalConfig config;
  config.k_query = 10000;
  config.depth = 100;
  const std::vector<QueryDocument> batch{query};
  const auto results = audited_batch(batch, index, store, config);
  const std::size_t pool = results[0].candidates.ids.size();
  const bool exact = pool == 100000 && results[0].candidates.pre_dedup_size == 100000;
  return {exact && pool_audit.violations == 0,
          fmt("disjoint construction pool = %zu; bound held in %zu of %zu audited queries "
              "across %zu batches",
              pool, pool_audit.queries - pool_audit.violations, pool_audit.queries,
              pool_audit.batches)};
}

Outcome relative_efficiency() {
  SynthCorpusSpec spec;
  spec.image_count = 1000000;
  spec.query_count = 100;
  spec.vocab_size = 200;
  spec.seed = 800;
  auto t0 = Clock::now();
  const auto corpus = generate_synth_corpus(spec);
  std::cerr << "  1M corpus in " << std::chrono::duration<double>(Clock::now() - t0).count()
            << " s\n";
  t0 = Clock::now();
  const auto index =
      build_entity_index(referenced_entities(corpus), corpus.images, 10000, nullptr, {0});
  std::cerr << "  index of " << index.size() << " entities in "
            << std::chrono::duration<double>(Clock::now() - t0).count() << " s\n";
  const auto docs = documents(corpus);
  const auto report = cli::run_bench(docs, index, corpus.images, 10000, 1000, 1);
  RetrievalConfig config;
  config.k_query = 10000;
  config.depth = 1000;
  audited_batch(docs, index, corpus.images, config);
  const double ratio = report.two_stage_ms_mean / report.sr_full_ms_mean;
  return {report.pool_bound_ok && report.mean_pool <= 100000 && ratio <= 0.5,
          fmt("1,000,000 x 64, %zu queries, mean pool %.0f: two_stage %.2f ms vs sr_full "
              "%.2f ms per query, ratio %.3f",
              report.queries, report.mean_pool, report.two_stage_ms_mean,
              report.sr_full_ms_mean, ratio)};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  // The pool-bound criterion audits every batch above it, so it runs last.
  const std::vector<Criterion> criteria{
      {1, "top-k oracle equivalence", topk_oracle},
      {2, "metric correctness", metric_correctness},
      {3, "candidate-restriction exactness", candidate_restriction},
      {4, "planted-target end-to-end", planted_target},
      {5, "coverage trend across k_query", trend_mechanism},
      {7, "serialization round trip", serialization},
      {8, "relative efficiency", relative_efficiency},
      {6, "pool bound", pool_bound},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.number)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << c.number << "] " << c.name << ": "
              << o.detail << fmt(" (%.1f s)", secs) << std::endl;
    failed += !o.pass;
  }
  std::cout << (failed == 0 ? "all criteria passed" : fmt("%d criteria failed", failed))
            << std::endl;
  return failed == 0 ? 0 : 1;
}
