#pragma once

// Desk-scale synthetic corpus with planted relevance.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfr/embedding_store.hpp"
#include "cfr/encoder_io.hpp"
#include "cfr/eval.hpp"

namespace cfr {

struct SynthCorpusSpec {
  std::uint64_t image_count = 50000;
  std::uint64_t query_count = 200;
  std::uint32_t entities_per_query = 5;
  std::uint32_t vocab_size = 1000;
  std::uint32_t dimension = 64;
  std::uint64_t seed = 7;
  // Length of the random perturbation added to the target vector before the
  // summary is renormalized. In [0, 1).
  double noise_scale = 0.05;
};

// Entity i (0-based) is named "ent%05d" and has entity id i + 1; its
// direction is mock_encode_text(name, {dimension, seed}). Query q has id
// q + 1, draws entities_per_query distinct vocabulary entities and one target
// image: normalize(sum of its entity directions + a random unit vector).
// Half the remaining images are "topical" (one or two random entities plus a
// random unit vector), the rest are random unit vectors. The summary of
// query q is normalize(target + noise_scale * random unit vector); with
// noise_scale = 0 it is the target vector bit for bit.
struct SynthCorpus {
  EmbeddingStore images;
  TextEmbeddings entities;   // keyed by entity id, text = normalized name
  TextEmbeddings summaries;  // keyed by query id
  std::vector<QueryRecord> queries;
  Qrels qrels;               // one relevant image per query
};

// Throws InvalidArgument for a spec outside its invariants.
SynthCorpus generate_synth_corpus(const SynthCorpusSpec& spec);

// File names used by write_synth_corpus inside the output directory.
struct SynthFiles {
  static constexpr const char* kImages = "images.emb";
  static constexpr const char* kEntities = "entities.emb";
  static constexpr const char* kEntitiesSidecar = "entities.jsonl";
  static constexpr const char* kSummaries = "summaries.emb";
  static constexpr const char* kSummariesSidecar = "summaries.jsonl";
  static constexpr const char* kQueries = "queries.jsonl";
  static constexpr const char* kQrels = "qrels.txt";
};

void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace cfr
