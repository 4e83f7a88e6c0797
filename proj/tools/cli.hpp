#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cfr/cfr.hpp"

namespace cfr::cli {

// Runs one cfr invocation. args excludes the program name. JSON summaries go
// to `out`, logs and errors to `err`. Returns the process exit status:
// 0 on success, 1 on a reported error, 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct BenchReport {
  std::size_t queries = 0;
  double two_stage_ms_mean = 0.0;
  double sr_full_ms_mean = 0.0;
  double mean_pool = 0.0;
  std::size_t max_pool = 0;
  // |candidates| <= entities_found * k_query held for every query.
  bool pool_bound_ok = true;
  double overlap_ratio = 0.0;  // NaN when no postings were seen
};

// Times two_stage and sr_full over the same queries (each query runs both
// modes back to back). Queries without a summary are skipped.
BenchReport run_bench(std::span<const QueryDocument> queries, const EntityIndex& index,
                      const EmbeddingStore& store, std::size_t k_query,
                      std::size_t depth, unsigned threads);

}  // namespace cfr::cli
