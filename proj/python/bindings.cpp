#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cobweb/cli.hpp"
#include "cobweb/embedding_io.hpp"
#include "cobweb/errors.hpp"
#include "cobweb/eval.hpp"
#include "cobweb/retrieval.hpp"
#include "cobweb/tree.hpp"
#include "cobweb/whitening.hpp"

namespace py = pybind11;
using namespace cobweb;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

EmbeddingMatrix matrix_from(const FloatArray& a, std::vector<std::string> ids) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), dim = static_cast<std::size_t>(a.shape(1));
  if (ids.empty())
    for (std::size_t i = 0; i < rows; ++i) ids.push_back("d" + std::to_string(i));
  return EmbeddingMatrix(dim, std::vector<float>(a.data(), a.data() + a.size()), std::move(ids));
}

FloatArray array_of(const EmbeddingMatrix& m) {
  FloatArray out({m.count(), m.dim()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

std::vector<double> vector_from(const DoubleArray& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

py::list entries_of(const RankedResult& r) {
  py::list out;
  for (const auto& e : r.entries) out.append(py::make_tuple(e.doc_id, e.score));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hierarchical Gaussian concept-tree retrieval";

  py::register_exception<Error>(m, "CobwebError", PyExc_RuntimeError);

  py::class_<EmbeddingMatrix>(m, "Embeddings")
      .def(py::init([](const FloatArray& a, std::vector<std::string> ids) { return matrix_from(a, std::move(ids)); }),
           py::arg("vectors"), py::arg("ids") = std::vector<std::string>{})
      .def_property_readonly("ids", &EmbeddingMatrix::ids)
      .def_property_readonly("dim", &EmbeddingMatrix::dim)
      .def("__len__", &EmbeddingMatrix::count)
      .def("to_numpy", &array_of);

  m.def("read_embeddings", &read_embeddings, py::arg("path"));
  m.def("write_embeddings", &write_embeddings, py::arg("embeddings"), py::arg("path"));

  py::class_<WhiteningTransform>(m, "WhiteningTransform")
      .def_readonly("input_dim", &WhiteningTransform::input_dim)
      .def_readonly("output_dim", &WhiteningTransform::output_dim)
      .def_readonly("use_ica", &WhiteningTransform::use_ica)
      .def_readonly("ica_converged", &WhiteningTransform::ica_converged)
      .def("apply", py::overload_cast<const WhiteningTransform&, const EmbeddingMatrix&>(&apply_whitening))
      .def("save", [](const WhiteningTransform& t, const std::filesystem::path& p) { write_transform(t, p); });

  m.def(
      "fit_whitening",
      [](const EmbeddingMatrix& corpus, double threshold, bool use_ica, std::uint64_t seed) {
        return fit_whitening(corpus, {.threshold = threshold, .use_ica = use_ica, .seed = seed});
      },
      py::arg("corpus"), py::arg("threshold") = 0.96, py::arg("use_ica") = true, py::arg("seed") = 0);
  m.def("load_transform", &read_transform, py::arg("path"));

  py::class_<CobwebTree>(m, "Tree")
      .def(py::init<std::size_t, double>(), py::arg("dim"), py::arg("variance_floor") = kDefaultVarianceFloor)
      .def(
          "insert",
          [](CobwebTree& t, const std::string& id, const DoubleArray& x) {
            const auto v = vector_from(x);
            t.insert(id, std::span<const double>(v));
          },
          py::arg("doc_id"), py::arg("vector"))
      .def_property_readonly("dim", &CobwebTree::dim)
      .def_property_readonly("node_count", &CobwebTree::node_count)
      .def_property_readonly("leaf_count", &CobwebTree::leaf_count)
      .def("check_invariants", &CobwebTree::check_invariants, py::arg("relative_tolerance") = 1e-6)
      .def("save", [](const CobwebTree& t, const std::filesystem::path& p) { save_tree(t, p); })
      .def("to_json", &tree_to_json);

  m.def(
      "build_tree",
      [](const EmbeddingMatrix& corpus, double variance_floor, std::optional<std::uint64_t> shuffle_seed) {
        return build_tree(corpus, {.variance_floor = variance_floor, .shuffle_seed = shuffle_seed});
      },
      py::arg("corpus"), py::arg("variance_floor") = kDefaultVarianceFloor, py::arg("shuffle_seed") = py::none());
  m.def("load_tree", &load_tree, py::arg("path"));

  py::class_<FrozenTree>(m, "Index")
      .def(py::init<const CobwebTree&>(), py::arg("tree"))
      .def_property_readonly("size", &FrozenTree::size)
      .def_property_readonly("leaf_count", &FrozenTree::leaf_count)
      .def(
          "bfs",
          [](const FrozenTree& t, const DoubleArray& q, std::size_t k, std::size_t n_max) {
            const auto v = vector_from(q);
            return entries_of(retrieve_bfs(t, v, {.k = k, .n_max = n_max}));
          },
          py::arg("query"), py::arg("k") = 10, py::arg("n_max") = 0)
      .def(
          "pathsum",
          [](const FrozenTree& t, const DoubleArray& q, std::size_t k, bool include_leaf, bool depth_normalize) {
            const auto v = vector_from(q);
            return entries_of(retrieve_pathsum(
                t, v, {.k = k, .include_leaf_score = include_leaf, .depth_normalize = depth_normalize}));
          },
          py::arg("query"), py::arg("k") = 10, py::arg("include_leaf_score") = false,
          py::arg("depth_normalize") = false);

  m.def(
      "retrieve_dot",
      [](const EmbeddingMatrix& corpus, const FloatArray& q, std::size_t k) {
        if (q.ndim() != 1) throw ShapeError("expected a 1-d array");
        return entries_of(retrieve_dot(corpus, {q.data(), static_cast<std::size_t>(q.size())}, k));
      },
      py::arg("corpus"), py::arg("query"), py::arg("k") = 10);

  m.def(
      "ndcg_at_k",
      [](const std::vector<std::string>& ranking, const Qrels::Grades& grades, std::size_t k) {
        RankedResult r;
        for (const auto& d : ranking) r.entries.push_back({d, 0.0, 0});
        return ndcg_at_k(r, grades, k);
      },
      py::arg("ranking"), py::arg("grades"), py::arg("k"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "cobweb");
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
