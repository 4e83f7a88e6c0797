#pragma once

// Transport for externally computed text embeddings, the query JSONL format,
// and a deterministic mock text encoder for model-free testing.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfr/embedding_store.hpp"
#include "cfr/entity_index.hpp"
#include "cfr/pipeline.hpp"

namespace cfr {

struct MockEncoderConfig {
  std::uint32_t dimension = 64;  // >= 2
  std::uint64_t seed = 0;
};

// Whitespace tokens, each hashed (FNV-1a 64 of the token bytes XOR
// splitmix64(seed)) into a splitmix64 stream that yields components uniform
// in [-1, 1); every token vector is L2-normalized, the token vectors are
// averaged (summed in sorted token order) and the mean is L2-normalized.
// Throws EmptyText, InvalidArgument (dimension < 2).
std::vector<float> mock_encode_text(std::string_view text,
                                    const MockEncoderConfig& config);

// A text embedding file pairs a binary file in the cache layout (ids are
// query or entity ids) with a JSONL sidecar of {"id": u64, "text": str}.
struct TextEmbedding {
  std::string text;
  std::vector<float> vector;
};
using TextEmbeddings = std::map<std::uint64_t, TextEmbedding>;

// Throws SidecarIdMismatch, MalformedLine, plus open_store errors.
TextEmbeddings load_text_embeddings(std::istream& binary, std::istream& sidecar);
TextEmbeddings load_text_embeddings(const std::filesystem::path& binary,
                                    const std::filesystem::path& sidecar);

// Throws DimensionMismatch when vectors differ in length.
void write_text_embeddings(const TextEmbeddings& embeddings, std::ostream& binary,
                           std::ostream& sidecar);
void write_text_embeddings(const TextEmbeddings& embeddings,
                           const std::filesystem::path& binary,
                           const std::filesystem::path& sidecar);

// Entity embeddings keyed by the normalized sidecar text. Throws
// EmptyAfterNormalization for blank texts.
std::vector<EntityEmbedding> to_entity_embeddings(const TextEmbeddings& embeddings);

// One line of the query JSONL:
// {"query_id": u64, "entities": [str...], "summary_text": str?,
//  "summary_embedding_id": u64?}; at most one summary field.
struct QueryRecord {
  QueryId query_id = 0;
  std::vector<std::string> entities;
  std::optional<std::string> summary_text;
  std::optional<std::uint64_t> summary_embedding_id;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

// Blank lines are skipped. Throws MalformedLine.
std::vector<QueryRecord> read_queries_jsonl(std::istream& source);
std::vector<QueryRecord> read_queries_jsonl(const std::filesystem::path& path);
void write_queries_jsonl(const std::vector<QueryRecord>& queries,
                         std::ostream& destination);

struct SummarySources {
  // Looked up by summary_embedding_id.
  const TextEmbeddings* embeddings = nullptr;
  // Encodes summary_text; without it text summaries stay unresolved.
  std::optional<MockEncoderConfig> mock_encoder;
};

// Attaches summary vectors. Queries whose summary cannot be resolved keep
// an empty summary (run_query then reports MissingSummary in SR modes).
// Throws UnknownId for a summary_embedding_id absent from the embeddings.
std::vector<QueryDocument> resolve_queries(const std::vector<QueryRecord>& records,
                                           const SummarySources& sources);

}  // namespace cfr
