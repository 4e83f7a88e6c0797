#pragma once

// Query-time retrieval: entity lookup, candidate union, summary re-ranking.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfr/embedding_store.hpp"
#include "cfr/entity_index.hpp"
#include "cfr/eval.hpp"
#include "cfr/ranking.hpp"
#include "cfr/types.hpp"

namespace cfr {

inline constexpr std::size_t kDefaultKQuery = 10000;
inline constexpr std::size_t kDefaultDepth = 1000;

struct QueryDocument {
  QueryId query_id = 0;
  std::vector<std::string> entities;  // raw, as extracted
  // Summary embedding, already encoded. Required by two_stage and sr_full.
  std::optional<std::vector<float>> summary;
};

struct CandidateSet {
  std::vector<ImageId> ids;  // ascending, unique
  std::size_t entities_found = 0;
  std::size_t entities_disregarded = 0;
  // Sum of truncated postings lengths before the union.
  std::size_t pre_dedup_size = 0;
};

enum class RetrievalMode {
  kTwoStage,  // entity candidates, then summary re-ranking
  kErOnly,    // fuse_max over the per-entity postings
  kSrFull,    // summary scored against the whole cache
};

// "two_stage" | "er_only" | "sr_full". Throws InvalidArgument.
RetrievalMode parse_mode(std::string_view name);
std::string_view mode_name(RetrievalMode mode) noexcept;

struct RetrievalConfig {
  RetrievalMode mode = RetrievalMode::kTwoStage;
  std::size_t k_query = kDefaultKQuery;
  std::size_t depth = kDefaultDepth;
  // two_stage with an empty candidate set falls back to sr_full.
  bool fallback_to_sr_full = false;
  // Parallelism inside one scan (run_query) or across queries (batch_run).
  ScanOptions scan;
};

struct QueryResult {
  QueryId query_id = 0;
  RankedList ranking;
  CandidateSet candidates;
  // Candidate ids missing from the cache, skipped during re-ranking.
  std::size_t unknown_candidates = 0;
  bool fell_back = false;
};

// Normalizes and deduplicates the query's entities, looks each up, truncates
// postings to k_query and unions the ids. Unknown entities only bump
// entities_disregarded. Throws InvalidArgument unless 1 <= k_query <= k_build.
CandidateSet er_candidates(const QueryDocument& query, const EntityIndex& index,
                           std::size_t k_query);

// top_k_scan restricted to the candidate ids. Throws DimensionMismatch.
RankedList sr_rerank(std::span<const float> summary, const CandidateSet& candidates,
                     const EmbeddingStore& store, std::size_t depth,
                     ScanStats* stats = nullptr, ScanOptions options = {});

// `index` may be null only in sr_full mode. Throws MissingSummary,
// InvalidArgument, DimensionMismatch.
QueryResult run_query(const QueryDocument& query, const EntityIndex* index,
                      const EmbeddingStore& store, const RetrievalConfig& config);

// Results ordered by query id. Throws DuplicateQueryId.
std::vector<QueryResult> batch_query(std::span<const QueryDocument> queries,
                                     const EntityIndex* index,
                                     const EmbeddingStore& store,
                                     const RetrievalConfig& config);

RunFile to_run_file(std::span<const QueryResult> results, std::string run_tag);

// batch_query rendered as a run file (each ranking to config.depth).
RunFile batch_run(std::span<const QueryDocument> queries, const EntityIndex* index,
                  const EmbeddingStore& store, const RetrievalConfig& config,
                  std::string run_tag);

}  // namespace cfr
