#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>
#include <map>

#include "rrrann/bench.hpp"
#include "rrrann/error.hpp"
#include "rrrann/index.hpp"

namespace py = pybind11;
using namespace rrrann;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

DenseMatrix to_matrix(const FloatArray& a, const char* what) {
  if (a.ndim() != 2) fail(ErrorKind::shape, std::string(what) + " must be a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return DenseMatrix(rows, cols, std::vector<float>(a.data(), a.data() + rows * cols));
}

std::vector<float> to_vector(const FloatArray& a) {
  if (a.ndim() != 1) fail(ErrorKind::shape, "query must be a 1-D array");
  return {a.data(), a.data() + a.shape(0)};
}

rrr::TrainSource parse_train_source(const std::string& s) {
  if (s == "corpus") return rrr::TrainSource::corpus;
  if (s == "query") return rrr::TrainSource::query_sample;
  fail(ErrorKind::parameter, "train_source must be 'corpus' or 'query', got '" + s + "'");
}

RrrIndex build(const FloatArray& data, const std::string& metric, std::size_t clusters, std::size_t rank,
               std::optional<std::size_t> reduced_dim, bool quantize, bool rerank, std::optional<std::size_t> balanced,
               std::optional<FloatArray> train, const std::string& train_source, std::uint64_t seed,
               std::size_t threads) {
  IndexConfig cfg;
  cfg.metric = parse_metric(metric);
  cfg.num_clusters = clusters;
  cfg.rrr.rank = rank;
  cfg.rrr.reduced_dim = reduced_dim;
  cfg.rrr.quantize = quantize;
  cfg.rrr.train_source = parse_train_source(train_source);
  cfg.rrr.seed = seed;
  cfg.rerank = rerank;
  if (balanced) {
    cfg.balanced = true;
    cfg.balance_delta = *balanced;
  }
  cfg.seed = seed;
  cfg.threads = threads;
  const DenseMatrix corpus = to_matrix(data, "data");
  std::optional<DenseMatrix> train_matrix;
  if (train) train_matrix = to_matrix(*train, "train");
  py::gil_scoped_release release;
  return RrrIndex::build(corpus, train_matrix, cfg);
}

py::tuple batch_arrays(const std::vector<QueryResult>& results, std::size_t k) {
  py::array_t<std::int64_t> ids({results.size(), k});
  py::array_t<float> scores({results.size(), k});
  auto i = ids.mutable_unchecked<2>();
  auto s = scores.mutable_unchecked<2>();
  for (std::size_t q = 0; q < results.size(); ++q) {
    for (std::size_t j = 0; j < k; ++j) {
      const bool have = j < results[q].ids.size();
      i(q, j) = have ? static_cast<std::int64_t>(results[q].ids[j]) : -1;
      s(q, j) = have ? results[q].scores[j] : std::numeric_limits<float>::infinity();
    }
  }
  return py::make_tuple(ids, scores);
}

}  // namespace

PYBIND11_MODULE(_rrrann, m) {
  m.doc() = "Clustered nearest-neighbour search scored by per-cluster reduced-rank regression";

  static py::exception<Error> base(m, "RrrannError", PyExc_RuntimeError);
  static std::map<ErrorKind, py::object> kinds;
  const std::pair<ErrorKind, const char*> names[] = {
      {ErrorKind::shape, "ShapeError"},   {ErrorKind::parameter, "ParameterError"},
      {ErrorKind::data, "DataError"},     {ErrorKind::format, "FormatError"},
      {ErrorKind::version, "VersionError"},
  };
  for (const auto& [kind, name] : names) {
    const std::string qualified = std::string("rrrann.") + name;
    py::object type = py::reinterpret_steal<py::object>(PyErr_NewException(qualified.c_str(), base.ptr(), nullptr));
    m.attr(name) = type;
    kinds[kind] = type;
  }
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      auto it = kinds.find(e.kind());
      PyErr_SetString(it != kinds.end() ? it->second.ptr() : base.ptr(), e.what());
    }
  });

  py::class_<RrrIndex>(m, "Index")
      .def_static("build", &build, py::arg("data"), py::arg("metric") = "euclidean", py::arg("clusters") = 0,
                  py::arg("rank") = 32, py::arg("reduced_dim") = py::none(), py::arg("quantize") = true,
                  py::arg("rerank") = true, py::arg("balanced") = py::none(), py::arg("train") = py::none(),
                  py::arg("train_source") = "corpus", py::arg("seed") = 0, py::arg("threads") = 1)
      .def(
          "query",
          [](const RrrIndex& self, const FloatArray& x, std::size_t k, std::size_t w, std::size_t t, bool rerank) {
            const auto r = self.query(to_vector(x), {k, w, t, rerank});
            py::array_t<std::int64_t> ids(r.ids.size());
            std::copy(r.ids.begin(), r.ids.end(), ids.mutable_data());
            return py::make_tuple(ids, py::array_t<float>(r.scores.size(), r.scores.data()));
          },
          py::arg("x"), py::arg("k") = 10, py::arg("w") = 8, py::arg("t") = 100, py::arg("rerank") = true)
      .def(
          "query_batch",
          [](const RrrIndex& self, const FloatArray& queries, std::size_t k, std::size_t w, std::size_t t, bool rerank,
             std::size_t threads) {
            const DenseMatrix q = to_matrix(queries, "queries");
            std::vector<QueryResult> results;
            {
              py::gil_scoped_release release;
              results = self.query_batch(q, {k, w, t, rerank}, threads);
            }
            return batch_arrays(results, k);
          },
          py::arg("queries"), py::arg("k") = 10, py::arg("w") = 8, py::arg("t") = 100, py::arg("rerank") = true,
          py::arg("threads") = 1)
      .def("save", [](const RrrIndex& self, const std::string& path) { self.save(path); })
      .def_static("load", [](const std::string& path) { return RrrIndex::load(path); })
      .def("to_bytes",
           [](const RrrIndex& self) {
             const auto b = self.serialize();
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def_static("from_bytes",
                  [](const py::bytes& data) {
                    const std::string_view v = data;
                    return RrrIndex::deserialize(
                        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(v.data()), v.size()));
                  })
      .def("footprint",
           [](const RrrIndex& self) {
             const auto f = self.footprint();
             py::dict d;
             d["code_bytes"] = f.code_bytes;
             d["aux_bytes"] = f.aux_bytes;
             d["corpus_bytes"] = f.corpus_bytes;
             d["total_bytes"] = f.total_bytes;
             return d;
           })
      .def_property_readonly("metric", [](const RrrIndex& self) { return std::string(to_string(self.metric())); })
      .def_property_readonly("dim", &RrrIndex::dim)
      .def_property_readonly("projected_dim", &RrrIndex::projected_dim)
      .def_property_readonly("num_clusters", &RrrIndex::num_clusters)
      .def_property_readonly("has_corpus", &RrrIndex::has_corpus)
      .def("__len__", &RrrIndex::size);

  m.def(
      "brute_force_knn",
      [](const FloatArray& corpus, const FloatArray& queries, std::size_t k, const std::string& metric,
         std::size_t threads) {
        const auto truth = bench::brute_force_knn(to_matrix(corpus, "corpus"), to_matrix(queries, "queries"), k,
                                                  parse_metric(metric), threads);
        py::array_t<std::int32_t> out({truth.size(), k});
        auto o = out.mutable_unchecked<2>();
        for (std::size_t q = 0; q < truth.size(); ++q)
          for (std::size_t j = 0; j < k; ++j) o(q, j) = truth[q][j];
        return out;
      },
      py::arg("corpus"), py::arg("queries"), py::arg("k"), py::arg("metric") = "euclidean", py::arg("threads") = 1);
}
