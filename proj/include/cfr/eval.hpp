#pragma once

// TREC qrels / run files and the Recall@K, MRR@K metrics.
//
//   qrels:  "qid 0 docid rel" per line; rel > 0 is relevant.
//   run:    "qid Q0 docid rank score tag" per line, score with 6 decimals,
//           queries ascending, ranks ascending within a query.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cfr/types.hpp"

namespace cfr {

struct CandidateSet;

// Binary relevance; every mapped set is non-empty.
using Qrels = std::map<QueryId, std::set<ImageId>>;

struct QrelsLoadReport {
  std::size_t lines = 0;  // non-blank judgment lines
  // Queries whose judgments were all non-positive.
  std::size_t dropped_queries = 0;
};

// Blank lines are ignored. Throws MalformedLine.
Qrels load_qrels(std::istream& source, QrelsLoadReport* report = nullptr);
Qrels load_qrels(const std::filesystem::path& path,
                 QrelsLoadReport* report = nullptr);
void write_qrels(const Qrels& qrels, std::ostream& destination);

struct RunEntry {
  ImageId id = 0;
  std::uint32_t rank = 0;  // 1-based
  double score = 0.0;

  friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

struct RunFile {
  std::string tag;
  // Entries of each query ordered by rank, ranks 1..n contiguous.
  std::map<QueryId, std::vector<RunEntry>> queries;

  friend bool operator==(const RunFile&, const RunFile&) = default;
};

void write_run(const RunFile& run, std::ostream& destination);
void write_run(const RunFile& run, const std::filesystem::path& path);

// Entries are grouped per query and ordered by their rank field. Throws
// MalformedLine (syntax, non-contiguous ranks, repeated docid).
RunFile load_run(std::istream& source);
RunFile load_run(const std::filesystem::path& path);

struct MetricReport {
  double value = 0.0;
  std::size_t judged_queries = 0;
  // Run queries with no judgments; they do not enter the average.
  std::size_t unjudged_run_queries = 0;
};

// Macro average over every judged query; judged queries missing from the
// run contribute 0. Throws NoJudgedQueries, InvalidArgument (k = 0).
MetricReport recall_report(const RunFile& run, const Qrels& qrels, std::size_t k);
MetricReport mrr_report(const RunFile& run, const Qrels& qrels, std::size_t k);

double recall_at_k(const RunFile& run, const Qrels& qrels, std::size_t k);
double mrr_at_k(const RunFile& run, const Qrels& qrels, std::size_t k);

// 1 - Σ|ids| / Σ pre_dedup_size. Throws NoCandidates when every
// pre_dedup_size is 0.
double overlap_ratio(std::span<const CandidateSet> stats);

}  // namespace cfr
