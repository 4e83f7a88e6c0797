#include "cfr/encoder_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cfr/error.hpp"
#include "cfr/hashing.hpp"

namespace cfr {

namespace {

using nlohmann::json;

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::vector<std::string_view> whitespace_tokens(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_ascii_space(text[i])) ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

void normalize_in_place(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
}

template <typename T>
T required_field(const json& obj, const char* name, std::size_t line_no) {
  const auto it = obj.find(name);
  if (it == obj.end()) {
    throw Error(ErrorCode::kMalformedLine,
                "line " + std::to_string(line_no) + ": missing \"" + name + "\"");
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedLine,
                "line " + std::to_string(line_no) + ": field \"" + name + "\": " + e.what());
  }
}

json parse_line(const std::string& line, std::size_t line_no) {
  json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded() || !obj.is_object()) {
    throw Error(ErrorCode::kMalformedLine,
                "line " + std::to_string(line_no) + ": not a JSON object");
  }
  return obj;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), is_ascii_space);
}

}  // namespace

std::vector<float> mock_encode_text(std::string_view text,
                                    const MockEncoderConfig& config) {
  if (config.dimension < 2) {
    throw Error(ErrorCode::kInvalidArgument, "mock encoder dimension must be >= 2");
  }
  auto tokens = whitespace_tokens(text);
  if (tokens.empty()) throw Error(ErrorCode::kEmptyText, "nothing to encode");
  std::sort(tokens.begin(), tokens.end());

  const std::uint64_t seed_mix = splitmix64_mix(config.seed);
  std::vector<double> sum(config.dimension, 0.0);
  std::vector<double> token_vec(config.dimension);
  for (auto token : tokens) {
    SplitMix64 rng(fnv1a64(token) ^ seed_mix);
    for (auto& x : token_vec) x = rng.uniform_signed();
    normalize_in_place(token_vec);
    for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += token_vec[d];
  }
  for (double& x : sum) x /= static_cast<double>(tokens.size());
  normalize_in_place(sum);
  return {sum.begin(), sum.end()};
}

TextEmbeddings load_text_embeddings(std::istream& binary, std::istream& sidecar) {
  const EmbeddingStore vectors = read_unsorted_records(binary);

  std::map<std::uint64_t, std::string> texts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(sidecar, line)) {
    ++line_no;
    if (blank(line)) continue;
    const json obj = parse_line(line, line_no);
    const auto id = required_field<std::uint64_t>(obj, "id", line_no);
    auto text = required_field<std::string>(obj, "text", line_no);
    if (!texts.emplace(id, std::move(text)).second) {
      throw Error(ErrorCode::kSidecarIdMismatch,
                  "id " + std::to_string(id) + " repeated in sidecar");
    }
  }

  if (texts.size() != vectors.size()) {
    throw Error(ErrorCode::kSidecarIdMismatch,
                std::to_string(texts.size()) + " sidecar ids vs " +
                    std::to_string(vectors.size()) + " vectors");
  }
  TextEmbeddings out;
  std::size_t pos = 0;
  for (auto& [id, text] : texts) {
    if (vectors.ids()[pos] != id) {
      throw Error(ErrorCode::kSidecarIdMismatch,
                  "sidecar id " + std::to_string(id) + " has no vector");
    }
    const auto v = vectors.vector_at(pos);
    out.emplace(id, TextEmbedding{std::move(text), {v.begin(), v.end()}});
    ++pos;
  }
  return out;
}

TextEmbeddings load_text_embeddings(const std::filesystem::path& binary,
                                    const std::filesystem::path& sidecar) {
  std::ifstream bin(binary, std::ios::binary);
  if (!bin) throw Error(ErrorCode::kIoFailure, "cannot open " + binary.string());
  std::ifstream side(sidecar);
  if (!side) throw Error(ErrorCode::kIoFailure, "cannot open " + sidecar.string());
  return load_text_embeddings(bin, side);
}

void write_text_embeddings(const TextEmbeddings& embeddings, std::ostream& binary,
                           std::ostream& sidecar) {
  const std::uint32_t dim =
      embeddings.empty()
          ? 1
          : static_cast<std::uint32_t>(embeddings.begin()->second.vector.size());
  std::vector<ImageId> ids;
  std::vector<float> flat;
  for (const auto& [id, e] : embeddings) {
    if (e.vector.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "text embedding " + std::to_string(id));
    }
    ids.push_back(id);
    flat.insert(flat.end(), e.vector.begin(), e.vector.end());
  }
  save_store(EmbeddingStore::from_flat(std::move(ids), std::move(flat), dim), binary);
  for (const auto& [id, e] : embeddings) {
    sidecar << json{{"id", id}, {"text", e.text}}.dump() << '\n';
  }
  if (!sidecar) throw Error(ErrorCode::kIoFailure, "sidecar write failed");
}

void write_text_embeddings(const TextEmbeddings& embeddings,
                           const std::filesystem::path& binary,
                           const std::filesystem::path& sidecar) {
  std::ofstream bin(binary, std::ios::binary | std::ios::trunc);
  if (!bin) throw Error(ErrorCode::kIoFailure, "cannot open " + binary.string());
  std::ofstream side(sidecar, std::ios::trunc);
  if (!side) throw Error(ErrorCode::kIoFailure, "cannot open " + sidecar.string());
  write_text_embeddings(embeddings, bin, side);
}

std::vector<EntityEmbedding> to_entity_embeddings(const TextEmbeddings& embeddings) {
  std::vector<EntityEmbedding> out;
  out.reserve(embeddings.size());
  for (const auto& [id, e] : embeddings) {
    out.push_back({EntityKey::normalize(e.text), e.vector});
  }
  return out;
}

std::vector<QueryRecord> read_queries_jsonl(std::istream& source) {
  std::vector<QueryRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (blank(line)) continue;
    const json obj = parse_line(line, line_no);
    QueryRecord rec;
    rec.query_id = required_field<QueryId>(obj, "query_id", line_no);
    rec.entities = required_field<std::vector<std::string>>(obj, "entities", line_no);
    if (obj.contains("summary_text") && !obj["summary_text"].is_null()) {
      rec.summary_text = required_field<std::string>(obj, "summary_text", line_no);
    }
    if (obj.contains("summary_embedding_id") && !obj["summary_embedding_id"].is_null()) {
      rec.summary_embedding_id =
          required_field<std::uint64_t>(obj, "summary_embedding_id", line_no);
    }
    if (rec.summary_text && rec.summary_embedding_id) {
      throw Error(ErrorCode::kMalformedLine,
                  "line " + std::to_string(line_no) +
                      ": summary_text and summary_embedding_id are exclusive");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<QueryRecord> read_queries_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  return read_queries_jsonl(in);
}

void write_queries_jsonl(const std::vector<QueryRecord>& queries,
                         std::ostream& destination) {
  for (const auto& q : queries) {
    json obj{{"query_id", q.query_id}, {"entities", q.entities}};
    if (q.summary_text) obj["summary_text"] = *q.summary_text;
    if (q.summary_embedding_id) obj["summary_embedding_id"] = *q.summary_embedding_id;
    destination << obj.dump() << '\n';
  }
  if (!destination) throw Error(ErrorCode::kIoFailure, "query write failed");
}

std::vector<QueryDocument> resolve_queries(const std::vector<QueryRecord>& records,
                                           const SummarySources& sources) {
  std::vector<QueryDocument> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    QueryDocument doc{rec.query_id, rec.entities, std::nullopt};
    if (rec.summary_embedding_id && sources.embeddings) {
      const auto it = sources.embeddings->find(*rec.summary_embedding_id);
      if (it == sources.embeddings->end()) {
        throw Error(ErrorCode::kUnknownId,
                    "summary embedding " + std::to_string(*rec.summary_embedding_id) +
                        " for query " + std::to_string(rec.query_id));
      }
      doc.summary = it->second.vector;
    } else if (rec.summary_text && sources.mock_encoder) {
      doc.summary = mock_encode_text(*rec.summary_text, *sources.mock_encoder);
    }
    out.push_back(std::move(doc));
  }
  return out;
}

}  // namespace cfr
