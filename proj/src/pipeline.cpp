#include "cfr/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include "cfr/error.hpp"

namespace cfr {

namespace {

std::span<const ScoredId> truncated(const EntityPostings& postings, std::size_t k) {
  return std::span<const ScoredId>(postings).first(std::min(k, postings.size()));
}

// Distinct normalized keys in first-seen order; counts strings that
// normalize to nothing.
std::vector<EntityKey> distinct_keys(const QueryDocument& query,
                                     std::size_t& empty_strings) {
  std::vector<EntityKey> keys;
  std::set<EntityKey> seen;
  empty_strings = 0;
  for (const auto& raw : query.entities) {
    auto key = EntityKey::try_normalize(raw);
    if (!key) {
      ++empty_strings;
      continue;
    }
    if (seen.insert(*key).second) keys.push_back(*std::move(key));
  }
  return keys;
}

void check_k_query(std::size_t k_query, const EntityIndex& index) {
  if (k_query == 0 || k_query > index.k_build()) {
    throw Error(ErrorCode::kInvalidArgument,
                "k_query must be in [1, " + std::to_string(index.k_build()) +
                    "], got " + std::to_string(k_query));
  }
}

const std::vector<float>& require_summary(const QueryDocument& query) {
  if (!query.summary) {
    throw Error(ErrorCode::kMissingSummary,
                "query " + std::to_string(query.query_id));
  }
  return *query.summary;
}

}  // namespace

RetrievalMode parse_mode(std::string_view name) {
  if (name == "two_stage") return RetrievalMode::kTwoStage;
  if (name == "er_only") return RetrievalMode::kErOnly;
  if (name == "sr_full") return RetrievalMode::kSrFull;
  throw Error(ErrorCode::kInvalidArgument, "unknown mode '" + std::string(name) + "'");
}

std::string_view mode_name(RetrievalMode mode) noexcept {
  switch (mode) {
    case RetrievalMode::kTwoStage: return "two_stage";
    case RetrievalMode::kErOnly: return "er_only";
    case RetrievalMode::kSrFull: return "sr_full";
  }
  return "two_stage";
}

CandidateSet er_candidates(const QueryDocument& query, const EntityIndex& index,
                           std::size_t k_query) {
  check_k_query(k_query, index);
  CandidateSet out;
  std::size_t empty_strings = 0;
  for (const auto& key : distinct_keys(query, empty_strings)) {
    const EntityPostings* postings = index.lookup(key);
    if (!postings) {
      ++out.entities_disregarded;
      continue;
    }
    ++out.entities_found;
    for (const auto& e : truncated(*postings, k_query)) out.ids.push_back(e.id);
  }
  out.entities_disregarded += empty_strings;
  out.pre_dedup_size = out.ids.size();
  std::sort(out.ids.begin(), out.ids.end());
  out.ids.erase(std::unique(out.ids.begin(), out.ids.end()), out.ids.end());
  return out;
}

RankedList sr_rerank(std::span<const float> summary, const CandidateSet& candidates,
                     const EmbeddingStore& store, std::size_t depth,
                     ScanStats* stats, ScanOptions options) {
  if (summary.size() != store.dimension()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "summary has " + std::to_string(summary.size()) +
                    " components, cache dimension is " +
                    std::to_string(store.dimension()));
  }
  if (candidates.ids.empty()) {
    if (stats) *stats = {};
    return {};
  }
  return top_k_scan(summary, store, depth, std::span<const ImageId>(candidates.ids),
                    stats, options);
}

QueryResult run_query(const QueryDocument& query, const EntityIndex* index,
                      const EmbeddingStore& store, const RetrievalConfig& config) {
  if (config.depth == 0) throw Error(ErrorCode::kInvalidArgument, "depth must be positive");
  QueryResult result;
  result.query_id = query.query_id;

  if (config.mode == RetrievalMode::kSrFull) {
    result.ranking = top_k_scan(require_summary(query), store, config.depth,
                                std::nullopt, nullptr, config.scan);
    return result;
  }

  if (!index) throw Error(ErrorCode::kInvalidArgument, "mode requires an entity index");
  if (config.mode == RetrievalMode::kTwoStage) require_summary(query);
  result.candidates = er_candidates(query, *index, config.k_query);

  if (config.mode == RetrievalMode::kErOnly) {
    std::vector<RankedList> lists;
    std::size_t empty_strings = 0;
    for (const auto& key : distinct_keys(query, empty_strings)) {
      if (const EntityPostings* postings = index->lookup(key)) {
        const auto head = truncated(*postings, config.k_query);
        lists.emplace_back(head.begin(), head.end());
      }
    }
    result.ranking = fuse_max(lists);
    if (result.ranking.size() > config.depth) result.ranking.resize(config.depth);
    return result;
  }

  const auto& summary = *query.summary;
  if (result.candidates.ids.empty() && config.fallback_to_sr_full) {
    result.fell_back = true;
    result.ranking = top_k_scan(summary, store, config.depth, std::nullopt, nullptr,
                                config.scan);
    return result;
  }
  ScanStats stats;
  result.ranking = sr_rerank(summary, result.candidates, store, config.depth, &stats,
                             config.scan);
  result.unknown_candidates = stats.unknown_skipped;
  return result;
}

std::vector<QueryResult> batch_query(std::span<const QueryDocument> queries,
                                     const EntityIndex* index,
                                     const EmbeddingStore& store,
                                     const RetrievalConfig& config) {
  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return queries[a].query_id < queries[b].query_id;
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (queries[order[i]].query_id == queries[order[i - 1]].query_id) {
      throw Error(ErrorCode::kDuplicateQueryId,
                  std::to_string(queries[order[i]].query_id));
    }
  }

  // Parallelism goes across queries; each scan runs single-threaded.
  RetrievalConfig per_query = config;
  per_query.scan.threads = 1;
  std::vector<QueryResult> results(queries.size());
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(resolve_threads(config.scan.threads), queries.size()));
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < order.size(); i += stride) {
      try {
        results[i] = run_query(queries[order[i]], index, store, per_query);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

RunFile to_run_file(std::span<const QueryResult> results, std::string run_tag) {
  RunFile run;
  run.tag = std::move(run_tag);
  for (const auto& r : results) {
    auto& entries = run.queries[r.query_id];
    entries.reserve(r.ranking.size());
    for (std::size_t i = 0; i < r.ranking.size(); ++i) {
      entries.push_back({r.ranking[i].id, static_cast<std::uint32_t>(i + 1),
                         r.ranking[i].score});
    }
  }
  return run;
}

RunFile batch_run(std::span<const QueryDocument> queries, const EntityIndex* index,
                  const EmbeddingStore& store, const RetrievalConfig& config,
                  std::string run_tag) {
  const auto results = batch_query(queries, index, store, config);
  return to_run_file(results, std::move(run_tag));
}

}  // namespace cfr
