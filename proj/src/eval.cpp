#include "cfr/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include "cfr/error.hpp"
#include "cfr/pipeline.hpp"

namespace cfr {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

[[noreturn]] void malformed(std::size_t line_no, std::string_view why) {
  throw Error(ErrorCode::kMalformedLine,
              "line " + std::to_string(line_no) + ": " + std::string(why));
}

void check_k(std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be positive");
}

// Shared driver: per-query score from the query's ranked entries (or an
// empty span when the run lacks the query), macro-averaged over qrels.
template <typename PerQuery>
MetricReport macro_average(const RunFile& run, const Qrels& qrels,
                           PerQuery&& per_query) {
  if (qrels.empty()) throw Error(ErrorCode::kNoJudgedQueries, "qrels are empty");
  MetricReport report;
  double sum = 0.0;
  for (const auto& [qid, relevant] : qrels) {
    const auto it = run.queries.find(qid);
    std::span<const RunEntry> entries;
    if (it != run.queries.end()) entries = it->second;
    sum += per_query(entries, relevant);
  }
  for (const auto& [qid, entries] : run.queries) {
    if (!qrels.contains(qid)) ++report.unjudged_run_queries;
  }
  report.judged_queries = qrels.size();
  report.value = sum / static_cast<double>(qrels.size());
  return report;
}

}  // namespace

Qrels load_qrels(std::istream& source, QrelsLoadReport* report) {
  Qrels qrels;
  std::set<QueryId> seen;
  std::string line;
  std::size_t line_no = 0;
  std::size_t judgments = 0;
  while (std::getline(source, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    ++judgments;
    if (fields.size() != 4) malformed(line_no, "expected 'qid 0 docid rel'");
    QueryId qid;
    ImageId doc;
    long long rel;
    if (!parse_number(fields[0], qid)) malformed(line_no, "bad query id");
    if (!parse_number(fields[2], doc)) malformed(line_no, "bad document id");
    if (!parse_number(fields[3], rel)) malformed(line_no, "bad relevance");
    seen.insert(qid);
    if (rel > 0) qrels[qid].insert(doc);
  }
  if (source.bad()) throw Error(ErrorCode::kIoFailure, "qrels read failed");
  if (report) {
    report->lines = judgments;
    report->dropped_queries = seen.size() - qrels.size();
  }
  return qrels;
}

Qrels load_qrels(const std::filesystem::path& path, QrelsLoadReport* report) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  return load_qrels(in, report);
}

void write_qrels(const Qrels& qrels, std::ostream& destination) {
  for (const auto& [qid, docs] : qrels) {
    for (ImageId doc : docs) destination << qid << " 0 " << doc << " 1\n";
  }
  if (!destination) throw Error(ErrorCode::kIoFailure, "qrels write failed");
}

void write_run(const RunFile& run, std::ostream& destination) {
  const std::string tag = run.tag.empty() ? "run" : run.tag;
  if (tag.find_first_of(" \t\r\n") != std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "run tag must not contain whitespace");
  }
  char score[64];
  for (const auto& [qid, entries] : run.queries) {
    for (const auto& e : entries) {
      std::snprintf(score, sizeof score, "%.6f", e.score);
      destination << qid << " Q0 " << e.id << ' ' << e.rank << ' ' << score << ' '
                  << tag << '\n';
    }
  }
  if (!destination) throw Error(ErrorCode::kIoFailure, "run write failed");
}

void write_run(const RunFile& run, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  write_run(run, out);
}

RunFile load_run(std::istream& source) {
  RunFile run;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != 6) malformed(line_no, "expected 'qid Q0 docid rank score tag'");
    QueryId qid;
    RunEntry entry;
    if (!parse_number(fields[0], qid)) malformed(line_no, "bad query id");
    if (!parse_number(fields[2], entry.id)) malformed(line_no, "bad document id");
    if (!parse_number(fields[3], entry.rank) || entry.rank == 0) {
      malformed(line_no, "bad rank");
    }
    if (!parse_number(fields[4], entry.score)) malformed(line_no, "bad score");
    if (run.tag.empty()) run.tag = std::string(fields[5]);
    run.queries[qid].push_back(entry);
  }
  if (source.bad()) throw Error(ErrorCode::kIoFailure, "run read failed");

  for (auto& [qid, entries] : run.queries) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    std::set<ImageId> ids;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].rank != i + 1) {
        throw Error(ErrorCode::kMalformedLine,
                    "query " + std::to_string(qid) + ": ranks are not 1..n contiguous");
      }
      if (!ids.insert(entries[i].id).second) {
        throw Error(ErrorCode::kMalformedLine,
                    "query " + std::to_string(qid) + ": document " +
                        std::to_string(entries[i].id) + " appears twice");
      }
    }
  }
  return run;
}

RunFile load_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  return load_run(in);
}

MetricReport recall_report(const RunFile& run, const Qrels& qrels, std::size_t k) {
  check_k(k);
  return macro_average(run, qrels, [k](std::span<const RunEntry> entries,
                                       const std::set<ImageId>& relevant) {
    std::size_t hits = 0;
    for (const auto& e : entries) {
      if (e.rank > k) break;
      hits += relevant.count(e.id);
    }
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
  });
}

MetricReport mrr_report(const RunFile& run, const Qrels& qrels, std::size_t k) {
  check_k(k);
  return macro_average(run, qrels, [k](std::span<const RunEntry> entries,
                                       const std::set<ImageId>& relevant) {
    for (const auto& e : entries) {
      if (e.rank > k) break;
      if (relevant.contains(e.id)) return 1.0 / static_cast<double>(e.rank);
    }
    return 0.0;
  });
}

double recall_at_k(const RunFile& run, const Qrels& qrels, std::size_t k) {
  return recall_report(run, qrels, k).value;
}

double mrr_at_k(const RunFile& run, const Qrels& qrels, std::size_t k) {
  return mrr_report(run, qrels, k).value;
}

double overlap_ratio(std::span<const CandidateSet> stats) {
  std::size_t unioned = 0;
  std::size_t raw = 0;
  for (const auto& s : stats) {
    unioned += s.ids.size();
    raw += s.pre_dedup_size;
  }
  if (raw == 0) throw Error(ErrorCode::kNoCandidates, "no postings in any candidate set");
  return 1.0 - static_cast<double>(unioned) / static_cast<double>(raw);
}

}  // namespace cfr
