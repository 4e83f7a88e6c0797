#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace cfr::cli {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

// Flags shared by the commands that need entity embeddings.
struct EntitySource {
  std::string embeddings;
  std::string sidecar;
  std::string list;  // plain text, one entity per line, mock-encoded
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--entities", embeddings, "Entity embedding binary");
    cmd->add_option("--entities-sidecar", sidecar, "Entity sidecar JSONL");
    cmd->add_option("--entity-list", list, "Entity strings, one per line (mock encoder)");
    cmd->add_option("--seed", seed, "Mock encoder seed");
  }

  std::vector<EntityEmbedding> load(std::uint32_t dimension, std::ostream& err) const {
    if (!embeddings.empty()) {
      if (sidecar.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "--entities requires --entities-sidecar");
      }
      return to_entity_embeddings(load_text_embeddings(embeddings, sidecar));
    }
    if (list.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "give --entities or --entity-list");
    }
    std::ifstream in(list);
    if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + list);
    std::vector<EntityEmbedding> out;
    std::string line;
    std::size_t blank = 0;
    const MockEncoderConfig encoder{dimension, seed};
    while (std::getline(in, line)) {
      auto key = EntityKey::try_normalize(line);
      if (!key) {
        ++blank;
        continue;
      }
      auto vec = mock_encode_text(key->text(), encoder);
      out.push_back({*std::move(key), std::move(vec)});
    }
    if (blank > 0) err << "skipped " << blank << " blank entity lines\n";
    return out;
  }
};

// Flags shared by the retrieval commands.
struct RetrievalFlags {
  std::string cache;
  std::string index;
  std::string queries;
  std::string summaries;
  std::string summaries_sidecar;
  std::string mode = "two_stage";
  std::size_t k_query = kDefaultKQuery;
  std::size_t depth = kDefaultDepth;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool fallback = false;

  void attach(CLI::App* cmd, bool with_mode) {
    cmd->add_option("--cache", cache, "Embedding cache")->required();
    cmd->add_option("--index", index, "Entity index");
    cmd->add_option("--queries", queries, "Query JSONL")->required();
    cmd->add_option("--summaries", summaries, "Summary embedding binary");
    cmd->add_option("--summaries-sidecar", summaries_sidecar, "Summary sidecar JSONL");
    if (with_mode) {
      cmd->add_option("--mode", mode, "two_stage | er_only | sr_full")
          ->check(CLI::IsMember({"two_stage", "er_only", "sr_full"}));
      cmd->add_flag("--fallback-sr-full", fallback,
                    "Score the whole cache when no entity is known");
    }
    cmd->add_option("--k-query", k_query, "Postings kept per entity")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--depth", depth, "Ranking depth")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Mock encoder seed for summary_text");
    cmd->add_option("--threads", threads, "Worker threads, 0 = auto");
  }
};

struct LoadedInputs {
  EmbeddingStore store;
  std::optional<EntityIndex> index;
  std::vector<QueryDocument> queries;
};

LoadedInputs load_inputs(const RetrievalFlags& f, bool need_index, std::ostream& err) {
  LoadedInputs in{open_store(f.cache), std::nullopt, {}};
  if (!f.index.empty()) {
    in.index = open_index(f.index);
    check_compatible(*in.index, in.store);
    if (f.k_query > in.index->k_build()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "--k-query " + std::to_string(f.k_query) + " exceeds the index k_build " +
                      std::to_string(in.index->k_build()));
    }
  } else if (need_index) {
    throw Error(ErrorCode::kInvalidArgument, "--index is required for this mode");
  }

  std::optional<TextEmbeddings> summaries;
  if (!f.summaries.empty()) {
    if (f.summaries_sidecar.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "--summaries requires --summaries-sidecar");
    }
    summaries = load_text_embeddings(f.summaries, f.summaries_sidecar);
  }
  SummarySources sources;
  sources.embeddings = summaries ? &*summaries : nullptr;
  sources.mock_encoder = MockEncoderConfig{in.store.dimension(), f.seed};
  in.queries = resolve_queries(read_queries_jsonl(f.queries), sources);
  err << "loaded " << in.store.size() << " images, "
      << (in.index ? in.index->size() : 0) << " entities, " << in.queries.size()
      << " queries\n";
  return in;
}

RetrievalConfig make_config(const RetrievalFlags& f) {
  RetrievalConfig config;
  config.mode = parse_mode(f.mode);
  config.k_query = f.k_query;
  config.depth = f.depth;
  config.fallback_to_sr_full = f.fallback;
  config.scan.threads = f.threads;
  return config;
}

json candidate_json(const QueryResult& r) {
  return json{{"pool", r.candidates.ids.size()},
              {"pre_dedup", r.candidates.pre_dedup_size},
              {"entities_found", r.candidates.entities_found},
              {"entities_disregarded", r.candidates.entities_disregarded},
              {"unknown_candidates", r.unknown_candidates},
              {"fell_back", r.fell_back}};
}

json index_summary(const char* command, const EntityIndex& index,
                   const IndexBuildReport& report, const std::string& path) {
  return json{{"command", command},
              {"index", path},
              {"entries", index.size()},
              {"k_build", index.k_build()},
              {"entities_scanned", report.entities_scanned},
              {"duplicate_keys", report.duplicate_keys},
              {"existing_keys_skipped", report.existing_keys_skipped},
              {"store_fingerprint", hex64(index.store_fingerprint())}};
}

// Fraction of relevant images that made it into each query's candidate set,
// macro-averaged over judged queries.
double candidate_coverage(std::span<const QueryResult> results, const Qrels& qrels) {
  std::map<QueryId, const CandidateSet*> by_query;
  for (const auto& r : results) by_query.emplace(r.query_id, &r.candidates);
  double sum = 0.0;
  for (const auto& [qid, relevant] : qrels) {
    const auto it = by_query.find(qid);
    if (it == by_query.end()) continue;
    std::size_t hits = 0;
    for (ImageId id : relevant) {
      hits += std::binary_search(it->second->ids.begin(), it->second->ids.end(), id);
    }
    sum += static_cast<double>(hits) / static_cast<double>(relevant.size());
  }
  return qrels.empty() ? 0.0 : sum / static_cast<double>(qrels.size());
}

std::vector<CandidateSet> candidate_sets(std::span<const QueryResult> results) {
  std::vector<CandidateSet> sets;
  sets.reserve(results.size());
  for (const auto& r : results) sets.push_back(r.candidates);
  return sets;
}

double overlap_or_nan(std::span<const CandidateSet> sets) {
  std::size_t raw = 0;
  for (const auto& s : sets) raw += s.pre_dedup_size;
  return raw == 0 ? std::numeric_limits<double>::quiet_NaN() : overlap_ratio(sets);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

BenchReport run_bench(std::span<const QueryDocument> queries, const EntityIndex& index,
                      const EmbeddingStore& store, std::size_t k_query,
                      std::size_t depth, unsigned threads) {
  RetrievalConfig two_stage;
  two_stage.mode = RetrievalMode::kTwoStage;
  two_stage.k_query = k_query;
  two_stage.depth = depth;
  two_stage.scan.threads = threads;
  RetrievalConfig sr_full = two_stage;
  sr_full.mode = RetrievalMode::kSrFull;

  BenchReport report;
  double two_stage_total = 0.0;
  double sr_full_total = 0.0;
  double pool_total = 0.0;
  std::vector<CandidateSet> sets;
  for (const auto& q : queries) {
    if (!q.summary) continue;
    auto start = Clock::now();
    const QueryResult staged = run_query(q, &index, store, two_stage);
    two_stage_total += elapsed_ms(start);

    start = Clock::now();
    const QueryResult full = run_query(q, &index, store, sr_full);
    sr_full_total += elapsed_ms(start);

    const auto pool = staged.candidates.ids.size();
    pool_total += static_cast<double>(pool);
    report.max_pool = std::max(report.max_pool, pool);
    if (pool > staged.candidates.entities_found * k_query) report.pool_bound_ok = false;
    sets.push_back(staged.candidates);
    ++report.queries;
  }
  if (report.queries > 0) {
    const double n = static_cast<double>(report.queries);
    report.two_stage_ms_mean = two_stage_total / n;
    report.sr_full_ms_mean = sr_full_total / n;
    report.mean_pool = pool_total / n;
  }
  report.overlap_ratio = overlap_or_nan(sets);
  return report;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entity-gated two-stage image retrieval over an embedding cache", "cfr"};
  app.require_subcommand(1);

  // build-cache
  std::string raw_input, cache_out;
  auto* build_cache = app.add_subcommand("build-cache", "Canonicalize raw image embeddings");
  build_cache->add_option("--input", raw_input, "Raw embedding records")->required();
  build_cache->add_option("--cache", cache_out, "Output cache file")->required();

  // build-index / extend-index
  std::string index_cache, index_out, index_in;
  std::uint32_t k_build = static_cast<std::uint32_t>(kDefaultKQuery);
  unsigned index_threads = 0;
  EntitySource build_entities, extend_entities;
  auto* build_index = app.add_subcommand("build-index", "Rank the cache for every entity");
  build_index->add_option("--cache", index_cache, "Embedding cache")->required();
  build_index->add_option("--k-build", k_build, "Postings per entity")
      ->check(CLI::PositiveNumber);
  build_index->add_option("--index-out", index_out, "Output index file")->required();
  build_index->add_option("--threads", index_threads, "Worker threads, 0 = auto");
  build_entities.attach(build_index);

  auto* extend = app.add_subcommand("extend-index", "Add unseen entities to an index");
  extend->add_option("--index", index_in, "Existing index")->required();
  extend->add_option("--cache", index_cache, "Embedding cache")->required();
  extend->add_option("--index-out", index_out, "Output index file")->required();
  extend->add_option("--threads", index_threads, "Worker threads, 0 = auto");
  extend_entities.attach(extend);

  // query
  RetrievalFlags query_flags;
  QueryId query_id = 0;
  auto* query = app.add_subcommand("query", "Retrieve for one query, print its ranking");
  query_flags.attach(query, true);
  query->add_option("--query-id", query_id, "Query to run")->required();

  // batch
  RetrievalFlags batch_flags;
  std::string run_out, run_tag = "cfr";
  auto* batch = app.add_subcommand("batch", "Retrieve for every query, write a TREC run");
  batch_flags.attach(batch, true);
  batch->add_option("--run-out", run_out, "Output run file")->required();
  batch->add_option("--tag", run_tag, "Run tag");

  // eval
  std::string eval_run, eval_qrels;
  std::size_t recall_k = 1000, mrr_k = 10;
  auto* eval = app.add_subcommand("eval", "Score a run against qrels");
  eval->add_option("--run", eval_run, "TREC run file")->required();
  eval->add_option("--qrels", eval_qrels, "Qrels file")->required();
  eval->add_option("--recall-k", recall_k, "Recall cutoff")->check(CLI::PositiveNumber);
  eval->add_option("--mrr-k", mrr_k, "MRR cutoff")->check(CLI::PositiveNumber);

  // synth
  SynthCorpusSpec spec;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth->add_option("--images", spec.image_count, "Image count");
  synth->add_option("--num-queries", spec.query_count, "Query count");
  synth->add_option("--entities-per-query", spec.entities_per_query, "Entities per query");
  synth->add_option("--vocab", spec.vocab_size, "Entity vocabulary size");
  synth->add_option("--dim", spec.dimension, "Embedding dimension");
  synth->add_option("--seed", spec.seed, "Generator seed");
  synth->add_option("--noise", spec.noise_scale, "Summary noise scale in [0, 1)");

  // bench
  RetrievalFlags bench_flags;
  auto* bench = app.add_subcommand("bench", "Time two_stage against sr_full");
  bench_flags.attach(bench, false);

  // sweep
  RetrievalFlags sweep_flags;
  std::string sweep_qrels;
  std::vector<std::size_t> sweep_ks{1000, 5000, 10000, 15000};
  auto* sweep = app.add_subcommand("sweep", "Evaluate two_stage across k_query values");
  sweep_flags.attach(sweep, false);
  sweep->add_option("--qrels", sweep_qrels, "Qrels file")->required();
  sweep->add_option("--k-query-list", sweep_ks, "k_query values")->delimiter(',');

  std::vector<const char*> argv{"cfr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e, out, err);
    return status == 0 ? 0 : 2;  // --help exits cleanly
  }

  try {
    if (*build_cache) {
      std::ifstream in(raw_input, std::ios::binary);
      if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + raw_input);
      const EmbeddingStore store = read_unsorted_records(in);
      const auto bytes = save_store(store, std::filesystem::path(cache_out));
      out << json{{"command", "build-cache"},
                  {"cache", cache_out},
                  {"count", store.size()},
                  {"dimension", store.dimension()},
                  {"bytes", bytes},
                  {"fingerprint", hex64(store.fingerprint())}}
                 .dump()
          << '\n';
    } else if (*build_index) {
      const EmbeddingStore store = open_store(std::filesystem::path(index_cache));
      const auto entities = build_entities.load(store.dimension(), err);
      IndexBuildReport report;
      const auto start = Clock::now();
      const EntityIndex index =
          build_entity_index(entities, store, k_build, &report, {index_threads});
      err << "ranked " << report.entities_scanned << " entities in " << elapsed_ms(start)
          << " ms\n";
      if (report.duplicate_keys > 0) {
        err << "warning: " << report.duplicate_keys
            << " duplicate entity keys, last occurrence kept\n";
      }
      save_index(index, std::filesystem::path(index_out));
      out << index_summary("build-index", index, report, index_out).dump() << '\n';
    } else if (*extend) {
      const EmbeddingStore store = open_store(std::filesystem::path(index_cache));
      const EntityIndex base = open_index(std::filesystem::path(index_in));
      const auto entities = extend_entities.load(store.dimension(), err);
      IndexBuildReport report;
      const EntityIndex index = extend_index(base, entities, store, &report, {index_threads});
      if (report.existing_keys_skipped > 0) {
        err << "warning: " << report.existing_keys_skipped
            << " entities already indexed, left untouched\n";
      }
      save_index(index, std::filesystem::path(index_out));
      out << index_summary("extend-index", index, report, index_out).dump() << '\n';
    } else if (*query) {
      const RetrievalConfig config = make_config(query_flags);
      const auto in = load_inputs(query_flags, config.mode != RetrievalMode::kSrFull, err);
      const auto it = std::find_if(in.queries.begin(), in.queries.end(),
                                   [&](const QueryDocument& q) { return q.query_id == query_id; });
      if (it == in.queries.end()) {
        throw Error(ErrorCode::kInvalidArgument, "no query " + std::to_string(query_id));
      }
      const QueryResult r = run_query(*it, in.index ? &*in.index : nullptr, in.store, config);
      json ranking = json::array();
      for (const auto& e : r.ranking) ranking.push_back({{"id", e.id}, {"score", e.score}});
      out << json{{"command", "query"},
                  {"query_id", r.query_id},
                  {"mode", mode_name(config.mode)},
                  {"candidates", candidate_json(r)},
                  {"ranking", ranking}}
                 .dump()
          << '\n';
    } else if (*batch) {
      const RetrievalConfig config = make_config(batch_flags);
      const auto in = load_inputs(batch_flags, config.mode != RetrievalMode::kSrFull, err);
      const auto start = Clock::now();
      const auto results =
          batch_query(in.queries, in.index ? &*in.index : nullptr, in.store, config);
      const double ms = elapsed_ms(start);
      write_run(to_run_file(results, run_tag), std::filesystem::path(run_out));

      std::size_t disregarded = 0, empty = 0, lines = 0;
      double pool = 0.0;
      for (const auto& r : results) {
        disregarded += r.candidates.entities_disregarded;
        empty += r.ranking.empty();
        lines += r.ranking.size();
        pool += static_cast<double>(r.candidates.ids.size());
      }
      if (disregarded > 0) err << "disregarded " << disregarded << " unknown entities\n";
      if (empty > 0) err << "warning: " << empty << " queries returned no results\n";
      const auto sets = candidate_sets(results);
      const double n = results.empty() ? 1.0 : static_cast<double>(results.size());
      out << json{{"command", "batch"},
                  {"run", run_out},
                  {"mode", mode_name(config.mode)},
                  {"queries", results.size()},
                  {"run_lines", lines},
                  {"k_query", config.k_query},
                  {"depth", config.depth},
                  {"mean_pool", pool / n},
                  {"overlap_ratio", finite_or_null(overlap_or_nan(sets))},
                  {"entities_disregarded", disregarded},
                  {"empty_rankings", empty},
                  {"ms_per_query", ms / n}}
                 .dump()
          << '\n';
    } else if (*eval) {
      QrelsLoadReport qrels_report;
      const Qrels qrels = load_qrels(std::filesystem::path(eval_qrels), &qrels_report);
      if (qrels_report.dropped_queries > 0) {
        err << "warning: dropped " << qrels_report.dropped_queries
            << " queries without relevant judgments\n";
      }
      const RunFile run_file = load_run(std::filesystem::path(eval_run));
      const auto recall = recall_report(run_file, qrels, recall_k);
      const auto mrr = mrr_report(run_file, qrels, mrr_k);
      if (recall.unjudged_run_queries > 0) {
        err << "warning: " << recall.unjudged_run_queries
            << " run queries have no judgments and were skipped\n";
      }
      out << json{{"command", "eval"},
                  {"mrr@" + std::to_string(mrr_k), mrr.value},
                  {"recall@" + std::to_string(recall_k), recall.value},
                  {"judged_queries", recall.judged_queries},
                  {"unjudged_run_queries", recall.unjudged_run_queries}}
                 .dump()
          << '\n';
    } else if (*synth) {
      const auto start = Clock::now();
      const SynthCorpus corpus = generate_synth_corpus(spec);
      write_synth_corpus(corpus, synth_dir);
      err << "generated corpus in " << elapsed_ms(start) << " ms\n";
      out << json{{"command", "synth"},
                  {"out_dir", synth_dir},
                  {"images", corpus.images.size()},
                  {"queries", corpus.queries.size()},
                  {"entities", corpus.entities.size()},
                  {"dimension", corpus.images.dimension()},
                  {"seed", spec.seed},
                  {"noise_scale", spec.noise_scale},
                  {"fingerprint", hex64(corpus.images.fingerprint())}}
                 .dump()
          << '\n';
    } else if (*bench) {
      const auto in = load_inputs(bench_flags, true, err);
      const BenchReport r = run_bench(in.queries, *in.index, in.store, bench_flags.k_query,
                                      bench_flags.depth, bench_flags.threads);
      out << json{{"command", "bench"},
                  {"queries", r.queries},
                  {"k_query", bench_flags.k_query},
                  {"depth", bench_flags.depth},
                  {"two_stage_ms_per_query", r.two_stage_ms_mean},
                  {"sr_full_ms_per_query", r.sr_full_ms_mean},
                  {"latency_ratio", r.sr_full_ms_mean > 0
                                        ? json(r.two_stage_ms_mean / r.sr_full_ms_mean)
                                        : json(nullptr)},
                  {"mean_pool", r.mean_pool},
                  {"max_pool", r.max_pool},
                  {"pool_bound_ok", r.pool_bound_ok},
                  {"overlap_ratio", finite_or_null(r.overlap_ratio)}}
                 .dump()
          << '\n';
    } else if (*sweep) {
      sweep_flags.k_query = *std::max_element(sweep_ks.begin(), sweep_ks.end());
      const auto in = load_inputs(sweep_flags, true, err);
      const Qrels qrels = load_qrels(std::filesystem::path(sweep_qrels));
      for (std::size_t k : sweep_ks) {
        RetrievalConfig config;
        config.k_query = k;
        config.depth = sweep_flags.depth;
        config.scan.threads = sweep_flags.threads;
        const auto start = Clock::now();
        const auto results = batch_query(in.queries, &*in.index, in.store, config);
        const double ms = elapsed_ms(start) / static_cast<double>(std::max<std::size_t>(1, results.size()));
        const RunFile run_file = to_run_file(results, "sweep");
        const auto sets = candidate_sets(results);
        double pool = 0.0;
        for (const auto& s : sets) pool += static_cast<double>(s.ids.size());
        out << json{{"command", "sweep"},
                    {"k_query", k},
                    {"mrr@10", mrr_at_k(run_file, qrels, 10)},
                    {"recall@1000", recall_at_k(run_file, qrels, 1000)},
                    {"candidate_coverage", candidate_coverage(results, qrels)},
                    {"mean_pool", pool / static_cast<double>(std::max<std::size_t>(1, sets.size()))},
                    {"overlap_ratio", finite_or_null(overlap_or_nan(sets))},
                    {"ms_per_query", ms}}
                   .dump()
            << '\n';
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace cfr::cli
