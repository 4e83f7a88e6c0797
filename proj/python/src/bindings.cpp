#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "cfr/cfr.hpp"

namespace py = pybind11;

namespace {

using namespace cfr;

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U64Array = py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>;

std::vector<float> to_vector(const F32Array& a) {
  if (a.ndim() != 1) throw Error(ErrorCode::kInvalidArgument, "expected a 1-d float array");
  return {a.data(), a.data() + a.shape(0)};
}

py::array_t<float> to_array(std::span<const float> v) {
  py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
  std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(float));
  return out;
}

py::list to_pairs(const RankedList& list) {
  py::list out;
  for (const auto& e : list) out.append(py::make_tuple(e.id, e.score));
  return out;
}

RankedList from_pairs(const std::vector<std::pair<ImageId, double>>& pairs) {
  RankedList out;
  out.reserve(pairs.size());
  for (auto [id, score] : pairs) out.push_back({id, score});
  return out;
}

// {name: vector} or an iterable of (name, vector) pairs.
std::vector<EntityEmbedding> to_entities(const py::handle& source) {
  std::vector<EntityEmbedding> out;
  auto add = [&](const py::handle& name, const py::handle& vec) {
    out.push_back({EntityKey::normalize(name.cast<std::string>()),
                   to_vector(vec.cast<F32Array>())});
  };
  if (py::isinstance<py::dict>(source)) {
    for (auto item : source.cast<py::dict>()) add(item.first, item.second);
  } else {
    for (auto item : source) {
      auto pair = item.cast<py::tuple>();
      add(pair[0], pair[1]);
    }
  }
  return out;
}

// {qid: [docid, ...]} in rank order.
RunFile to_run(const std::map<QueryId, std::vector<ImageId>>& run) {
  RunFile out{"run", {}};
  for (const auto& [qid, docs] : run) {
    auto& entries = out.queries[qid];
    for (std::size_t i = 0; i < docs.size(); ++i) {
      entries.push_back({docs[i], static_cast<std::uint32_t>(i + 1),
                         -static_cast<double>(i)});
    }
  }
  return out;
}

std::map<QueryId, std::vector<ImageId>> from_run(const RunFile& run) {
  std::map<QueryId, std::vector<ImageId>> out;
  for (const auto& [qid, entries] : run.queries) {
    auto& docs = out[qid];
    for (const auto& e : entries) docs.push_back(e.id);
  }
  return out;
}

RetrievalConfig make_config(const std::string& mode, std::size_t k_query, std::size_t depth,
                            bool fallback, unsigned threads) {
  RetrievalConfig c;
  c.mode = parse_mode(mode);
  c.k_query = k_query;
  c.depth = depth;
  c.fallback_to_sr_full = fallback;
  c.scan.threads = threads;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Two-stage entity-gated dense retrieval over a precomputed embedding cache.";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result([&]() {
    return py::object(py::exception<Error>(m, "CfrError", PyExc_RuntimeError));
  });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object type = error_type.get_stored();
      py::object instance = type(e.what());
      instance.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(type.ptr(), instance.ptr());
    }
  });

  py::class_<EmbeddingStore>(m, "EmbeddingStore")
      .def_static(
          "from_arrays",
          [](const U64Array& ids, const F32Array& vectors) {
            if (ids.ndim() != 1 || vectors.ndim() != 2 || vectors.shape(0) != ids.shape(0)) {
              throw Error(ErrorCode::kDimensionMismatch,
                          "expected ids of shape (n,) and vectors of shape (n, dim)");
            }
            const auto dim = static_cast<std::uint32_t>(vectors.shape(1));
            std::vector<ImageId> id_vec(ids.data(), ids.data() + ids.shape(0));
            std::vector<float> flat(vectors.data(), vectors.data() + vectors.size());
            return EmbeddingStore::from_flat(std::move(id_vec), std::move(flat), dim);
          },
          py::arg("ids"), py::arg("vectors"))
      .def_static("open", py::overload_cast<const std::filesystem::path&>(&open_store),
                  py::arg("path"))
      .def(
          "save",
          [](const EmbeddingStore& s, const std::filesystem::path& p) { return save_store(s, p); },
          py::arg("path"))
      .def_property_readonly("dimension", &EmbeddingStore::dimension)
      .def_property_readonly("fingerprint", &EmbeddingStore::fingerprint)
      .def_property_readonly("ids",
                             [](const EmbeddingStore& s) {
                               U64Array out(static_cast<py::ssize_t>(s.size()));
                               std::memcpy(out.mutable_data(), s.ids().data(),
                                           s.size() * sizeof(ImageId));
                               return out;
                             })
      .def("get_vector", [](const EmbeddingStore& s, ImageId id) { return to_array(s.get_vector(id)); },
           py::arg("id"))
      .def("__contains__", &EmbeddingStore::contains)
      .def("__len__", &EmbeddingStore::size)
      .def("__eq__", [](const EmbeddingStore& a, const EmbeddingStore& b) { return a == b; });

  py::class_<EntityIndex>(m, "EntityIndex")
      .def_static("open", py::overload_cast<const std::filesystem::path&>(&open_index),
                  py::arg("path"))
      .def(
          "save", [](const EntityIndex& i, const std::filesystem::path& p) { return save_index(i, p); },
          py::arg("path"))
      .def_property_readonly("k_build", &EntityIndex::k_build)
      .def_property_readonly("store_fingerprint", &EntityIndex::store_fingerprint)
      .def(
          "lookup",
          [](const EntityIndex& i, const std::string& name) -> py::object {
            const EntityPostings* p = i.lookup(std::string_view(name));
            if (!p) return py::none();
            return to_pairs(*p);
          },
          py::arg("entity"), "Postings as (id, score) pairs, or None when the entity is unknown.")
      .def("keys",
           [](const EntityIndex& i) {
             std::vector<std::string> keys;
             for (const auto& [k, v] : i.entries()) keys.push_back(k.text());
             return keys;
           })
      .def("__len__", &EntityIndex::size)
      .def("__eq__", [](const EntityIndex& a, const EntityIndex& b) { return a == b; });

  m.def("normalize_entity", &normalize_entity_text, py::arg("text"));

  m.def(
      "build_entity_index",
      [](const py::object& entities, const EmbeddingStore& store, std::uint32_t k_build,
         unsigned threads) {
        const auto ents = to_entities(entities);
        py::gil_scoped_release release;
        return build_entity_index(ents, store, k_build, nullptr, {threads});
      },
      py::arg("entities"), py::arg("store"), py::arg("k_build") = 10000, py::arg("threads") = 1);

  m.def(
      "extend_index",
      [](const EntityIndex& index, const py::object& entities, const EmbeddingStore& store,
         unsigned threads) {
        const auto ents = to_entities(entities);
        py::gil_scoped_release release;
        return extend_index(index, ents, store, nullptr, {threads});
      },
      py::arg("index"), py::arg("entities"), py::arg("store"), py::arg("threads") = 1);

  m.def(
      "dot_score",
      [](const F32Array& a, const F32Array& b) { return dot_score(to_vector(a), to_vector(b)); },
      py::arg("a"), py::arg("b"));

  m.def(
      "top_k_scan",
      [](const F32Array& query, const EmbeddingStore& store, std::size_t k,
         std::optional<std::vector<ImageId>> candidates, unsigned threads) {
        const auto q = to_vector(query);
        RankedList out;
        {
          py::gil_scoped_release release;
          std::optional<std::span<const ImageId>> c;
          if (candidates) c = std::span<const ImageId>(*candidates);
          out = top_k_scan(q, store, k, c, nullptr, {threads});
        }
        return to_pairs(out);
      },
      py::arg("query"), py::arg("store"), py::arg("k"), py::arg("candidates") = py::none(),
      py::arg("threads") = 1);

  m.def(
      "fuse_max",
      [](const std::vector<std::vector<std::pair<ImageId, double>>>& lists) {
        std::vector<RankedList> ranked;
        for (const auto& l : lists) ranked.push_back(from_pairs(l));
        return to_pairs(fuse_max(ranked));
      },
      py::arg("lists"));

  py::class_<QueryDocument>(m, "QueryDocument")
      .def(py::init([](QueryId id, std::vector<std::string> entities,
                       std::optional<F32Array> summary) {
             QueryDocument q{id, std::move(entities), std::nullopt};
             if (summary) q.summary = to_vector(*summary);
             return q;
           }),
           py::arg("query_id"), py::arg("entities"), py::arg("summary") = py::none())
      .def_readonly("query_id", &QueryDocument::query_id)
      .def_readonly("entities", &QueryDocument::entities)
      .def_property_readonly("summary", [](const QueryDocument& q) -> py::object {
        if (!q.summary) return py::none();
        return to_array(*q.summary);
      });

  py::class_<CandidateSet>(m, "CandidateSet")
      .def_readonly("ids", &CandidateSet::ids)
      .def_readonly("entities_found", &CandidateSet::entities_found)
      .def_readonly("entities_disregarded", &CandidateSet::entities_disregarded)
      .def_readonly("pre_dedup_size", &CandidateSet::pre_dedup_size);

  py::class_<QueryResult>(m, "QueryResult")
      .def_readonly("query_id", &QueryResult::query_id)
      .def_property_readonly("ranking", [](const QueryResult& r) { return to_pairs(r.ranking); })
      .def_readonly("candidates", &QueryResult::candidates)
      .def_readonly("unknown_candidates", &QueryResult::unknown_candidates)
      .def_readonly("fell_back", &QueryResult::fell_back);

  m.def("er_candidates", &er_candidates, py::arg("query"), py::arg("index"),
        py::arg("k_query") = kDefaultKQuery);

  m.def(
      "run_query",
      [](const QueryDocument& q, const EntityIndex* index, const EmbeddingStore& store,
         const std::string& mode, std::size_t k_query, std::size_t depth, bool fallback,
         unsigned threads) {
        const auto config = make_config(mode, k_query, depth, fallback, threads);
        py::gil_scoped_release release;
        return run_query(q, index, store, config);
      },
      py::arg("query"), py::arg("index"), py::arg("store"), py::arg("mode") = "two_stage",
      py::arg("k_query") = kDefaultKQuery, py::arg("depth") = kDefaultDepth,
      py::arg("fallback_to_sr_full") = false, py::arg("threads") = 1);

  m.def(
      "batch_query",
      [](const std::vector<QueryDocument>& queries, const EntityIndex* index,
         const EmbeddingStore& store, const std::string& mode, std::size_t k_query,
         std::size_t depth, bool fallback, unsigned threads) {
        const auto config = make_config(mode, k_query, depth, fallback, threads);
        py::gil_scoped_release release;
        return batch_query(queries, index, store, config);
      },
      py::arg("queries"), py::arg("index"), py::arg("store"), py::arg("mode") = "two_stage",
      py::arg("k_query") = kDefaultKQuery, py::arg("depth") = kDefaultDepth,
      py::arg("fallback_to_sr_full") = false, py::arg("threads") = 1,
      "Results ordered by query id.");

  m.def(
      "write_run",
      [](const std::vector<QueryResult>& results, const std::filesystem::path& path,
         const std::string& tag) { write_run(to_run_file(results, tag), path); },
      py::arg("results"), py::arg("path"), py::arg("tag") = "cfr");
  m.def(
      "load_run", [](const std::filesystem::path& p) { return from_run(load_run(p)); },
      py::arg("path"), "{query_id: [doc ids in rank order]}");
  m.def(
      "load_qrels", [](const std::filesystem::path& p) { return load_qrels(p); },
      py::arg("path"));
  m.def(
      "recall_at_k",
      [](const std::map<QueryId, std::vector<ImageId>>& run, const Qrels& qrels,
         std::size_t k) { return recall_at_k(to_run(run), qrels, k); },
      py::arg("run"), py::arg("qrels"), py::arg("k"));
  m.def(
      "mrr_at_k",
      [](const std::map<QueryId, std::vector<ImageId>>& run, const Qrels& qrels,
         std::size_t k) { return mrr_at_k(to_run(run), qrels, k); },
      py::arg("run"), py::arg("qrels"), py::arg("k"));
  m.def("overlap_ratio", [](const std::vector<CandidateSet>& sets) { return overlap_ratio(sets); },
        py::arg("candidate_sets"));

  m.def(
      "mock_encode_text",
      [](const std::string& text, std::uint32_t dimension, std::uint64_t seed) {
        return to_array(mock_encode_text(text, {dimension, seed}));
      },
      py::arg("text"), py::arg("dimension") = 64, py::arg("seed") = 0);

  m.def(
      "load_text_embeddings",
      [](const std::filesystem::path& binary, const std::filesystem::path& sidecar) {
        py::dict out;
        for (const auto& [id, e] : load_text_embeddings(binary, sidecar)) {
          out[py::int_(id)] = py::make_tuple(e.text, to_array(e.vector));
        }
        return out;
      },
      py::arg("binary"), py::arg("sidecar"), "{id: (text, vector)}");

  m.def(
      "load_queries",
      [](const std::filesystem::path& queries, std::optional<std::filesystem::path> summaries,
         std::optional<std::filesystem::path> summaries_sidecar,
         std::optional<std::uint32_t> mock_dimension, std::uint64_t mock_seed) {
        std::optional<TextEmbeddings> embeddings;
        if (summaries) {
          if (!summaries_sidecar) {
            throw Error(ErrorCode::kInvalidArgument, "summaries need their sidecar");
          }
          embeddings = load_text_embeddings(*summaries, *summaries_sidecar);
        }
        SummarySources sources;
        if (embeddings) sources.embeddings = &*embeddings;
        if (mock_dimension) sources.mock_encoder = MockEncoderConfig{*mock_dimension, mock_seed};
        return resolve_queries(read_queries_jsonl(queries), sources);
      },
      py::arg("queries"), py::arg("summaries") = py::none(),
      py::arg("summaries_sidecar") = py::none(), py::arg("mock_dimension") = py::none(),
      py::arg("mock_seed") = 0);

  m.def(
      "write_synth_corpus",
      [](const std::filesystem::path& out_dir, std::uint64_t images, std::uint64_t queries,
         std::uint32_t entities_per_query, std::uint32_t vocab, std::uint32_t dimension,
         std::uint64_t seed, double noise_scale) {
        SynthCorpusSpec spec{images, queries, entities_per_query, vocab, dimension, seed,
                             noise_scale};
        py::gil_scoped_release release;
        const auto corpus = generate_synth_corpus(spec);
        write_synth_corpus(corpus, out_dir);
        return corpus.images.fingerprint();
      },
      py::arg("out_dir"), py::arg("images") = 50000, py::arg("queries") = 200,
      py::arg("entities_per_query") = 5, py::arg("vocab") = 1000, py::arg("dimension") = 64,
      py::arg("seed") = 7, py::arg("noise_scale") = 0.05,
      "Writes a synthetic corpus and returns the image cache fingerprint.");
}
