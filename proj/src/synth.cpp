#include "cfr/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "cfr/error.hpp"
#include "cfr/hashing.hpp"

namespace cfr {

namespace {

using Vec = std::vector<double>;

void validate(const SynthCorpusSpec& spec) {
  auto fail = [](const std::string& why) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic corpus: " + why);
  };
  if (spec.image_count == 0 || spec.query_count == 0 || spec.entities_per_query == 0 ||
      spec.vocab_size == 0) {
    fail("all counts must be positive");
  }
  if (spec.dimension < 2) fail("dimension must be >= 2");
  if (!(spec.noise_scale >= 0.0 && spec.noise_scale < 1.0)) {
    fail("noise_scale must be in [0, 1)");
  }
  if (spec.entities_per_query > spec.vocab_size) {
    fail("entities_per_query exceeds vocab_size");
  }
  if (spec.query_count > spec.image_count) fail("more queries than images");
}

Vec random_unit(SplitMix64& rng, std::size_t dim) {
  Vec v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.gaussian();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<float> normalized_float(const Vec& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

// Sum of the given entity directions plus one random unit vector.
Vec planted(const std::vector<Vec>& directions, std::span<const std::uint32_t> entities,
            SplitMix64& rng, std::size_t dim) {
  Vec v = random_unit(rng, dim);
  for (auto e : entities) {
    for (std::size_t d = 0; d < dim; ++d) v[d] += directions[e][d];
  }
  return v;
}

std::string entity_name(std::uint32_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ent%05u", index);
  return buf;
}

// Surface variants of a normalized name, to exercise query-side
// normalization: as is, capitalized, upper case with stray whitespace.
std::string surface_form(const std::string& name, std::uint64_t variant) {
  std::string s = name;
  switch (variant % 3) {
    case 0:
      break;
    case 1:
      s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
      break;
    default:
      for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      s = "  " + s + "\t";
      break;
  }
  return s;
}

}  // namespace

SynthCorpus generate_synth_corpus(const SynthCorpusSpec& spec) {
  validate(spec);
  const std::size_t dim = spec.dimension;
  SplitMix64 rng(splitmix64_mix(spec.seed ^ 0x5eed5eed5eed5eedULL));

  SynthCorpus corpus{EmbeddingStore(spec.dimension), {}, {}, {}, {}};

  std::vector<Vec> directions(spec.vocab_size);
  const MockEncoderConfig encoder{spec.dimension, spec.seed};
  for (std::uint32_t e = 0; e < spec.vocab_size; ++e) {
    const std::string name = entity_name(e);
    auto v = mock_encode_text(name, encoder);
    directions[e].assign(v.begin(), v.end());
    corpus.entities.emplace(e + 1, TextEmbedding{name, std::move(v)});
  }

  // Query entities and distinct target images.
  std::vector<std::vector<std::uint32_t>> query_entities(spec.query_count);
  std::unordered_map<std::uint64_t, std::uint64_t> target_of_image;  // image -> query
  std::vector<std::uint64_t> target_image(spec.query_count);
  for (std::uint64_t q = 0; q < spec.query_count; ++q) {
    std::unordered_set<std::uint32_t> chosen;
    while (query_entities[q].size() < spec.entities_per_query) {
      const auto e = static_cast<std::uint32_t>(rng.below(spec.vocab_size));
      if (chosen.insert(e).second) query_entities[q].push_back(e);
    }
    std::uint64_t image;
    do {
      image = rng.below(spec.image_count);
    } while (target_of_image.contains(image));
    target_of_image.emplace(image, q);
    target_image[q] = image;
  }

  std::vector<ImageId> ids(spec.image_count);
  std::vector<float> flat;
  flat.reserve(spec.image_count * dim);
  for (std::uint64_t i = 0; i < spec.image_count; ++i) {
    ids[i] = i + 1;
    Vec v;
    if (const auto it = target_of_image.find(i); it != target_of_image.end()) {
      v = planted(directions, query_entities[it->second], rng, dim);
    } else if (rng.uniform01() < 0.5) {
      std::uint32_t topics[2];
      const std::size_t n = 1 + rng.below(2);
      for (std::size_t t = 0; t < n; ++t) {
        topics[t] = static_cast<std::uint32_t>(rng.below(spec.vocab_size));
      }
      v = planted(directions, std::span<const std::uint32_t>(topics, n), rng, dim);
    } else {
      v = random_unit(rng, dim);
    }
    const auto f = normalized_float(v);
    flat.insert(flat.end(), f.begin(), f.end());
  }

  for (std::uint64_t q = 0; q < spec.query_count; ++q) {
    const QueryId qid = q + 1;
    const float* target = flat.data() + target_image[q] * dim;
    std::vector<float> summary(target, target + dim);
    if (spec.noise_scale > 0.0) {
      const Vec noise = random_unit(rng, dim);
      Vec s(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        s[d] = static_cast<double>(target[d]) + spec.noise_scale * noise[d];
      }
      summary = normalized_float(s);
    }
    corpus.summaries.emplace(
        qid, TextEmbedding{"synthetic summary " + std::to_string(qid), std::move(summary)});

    QueryRecord rec;
    rec.query_id = qid;
    for (auto e : query_entities[q]) {
      rec.entities.push_back(surface_form(entity_name(e), rng.next()));
    }
    rec.summary_embedding_id = qid;
    corpus.queries.push_back(std::move(rec));
    corpus.qrels[qid].insert(ids[target_image[q]]);
  }

  corpus.images = EmbeddingStore::from_flat(std::move(ids), std::move(flat), spec.dimension);
  return corpus;
}

void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_store(corpus.images, dir / SynthFiles::kImages);
  write_text_embeddings(corpus.entities, dir / SynthFiles::kEntities,
                        dir / SynthFiles::kEntitiesSidecar);
  write_text_embeddings(corpus.summaries, dir / SynthFiles::kSummaries,
                        dir / SynthFiles::kSummariesSidecar);
  {
    std::ofstream out(dir / SynthFiles::kQueries, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoFailure, "cannot write queries");
    write_queries_jsonl(corpus.queries, out);
  }
  std::ofstream out(dir / SynthFiles::kQrels, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write qrels");
  write_qrels(corpus.qrels, out);
}

}  // namespace cfr
