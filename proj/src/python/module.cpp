#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "attnsel/catalog.h"
#include "attnsel/config.h"
#include "attnsel/errors.h"
#include "attnsel/numeric.h"
#include "attnsel/pipeline.h"
#include "attnsel/rng.h"
#include "attnsel/scoring.h"
#include "attnsel/selftest.h"
#include "attnsel/synthetic.h"
#include "attnsel/tensor_io.h"

namespace py = pybind11;
using namespace attnsel;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const py::array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (py::isinstance<py::array_t<std::uint8_t>>(a)) {
    const auto u = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>::ensure(a);
    return Tensor::from_u8(std::move(shape), std::vector<std::uint8_t>(u.data(), u.data() + u.size()));
  }
  const auto f = F32Array::ensure(a);
  if (!f) throw ArgumentError("expected a float32 or uint8 array");
  return Tensor::from_f32(std::move(shape), std::vector<float>(f.data(), f.data() + f.size()));
}

py::array array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  if (t.dtype() == DType::kU8) {
    py::array_t<std::uint8_t> out(shape);
    std::copy(t.u8().begin(), t.u8().end(), out.mutable_data());
    return std::move(out);
  }
  py::array_t<float> out(shape);
  std::copy(t.f32().begin(), t.f32().end(), out.mutable_data());
  return std::move(out);
}

RunConfig config_from(const std::string& config_json) {
  RunConfig config;
  if (!config_json.empty()) merge_json(config, nlohmann::json::parse(config_json));
  config.validate();
  return config;
}

// Backends and catalog loaded once, reused across calls.
class Session {
 public:
  explicit Session(const std::string& config_json) : config_(config_from(config_json)) {
    backends_ = load_backends(config_);
    if (config_.catalog.empty()) throw ConfigError("config needs a catalog path");
    catalog_ = load_catalog(config_.catalog);
    if (catalog_.dim() != backends_.encoder->spec().embed_dim) {
      throw ConfigError("catalog embed_dim does not match the encoder");
    }
  }

  std::string classify(const std::filesystem::path& image_path, bool baseline) const {
    const auto image = decode_image(image_path);
    const auto id = image_path.filename().string();
    py::gil_scoped_release release;
    const auto r = baseline ? run_baseline(image, id, config_, backends_, catalog_)
                            : run_image(image, id, config_, backends_, catalog_);
    return to_json(r, catalog_).dump();
  }

  std::string evaluate(const std::filesystem::path& dataset, const std::filesystem::path& jsonl, bool baseline) const {
    EvalOptions options;
    options.jsonl = jsonl;
    options.baseline = baseline;
    py::gil_scoped_release release;
    return to_json(evaluate_dataset(dataset, config_, backends_, catalog_, options)).dump();
  }

  std::vector<std::string> class_names() const {
    std::vector<std::string> names;
    for (const auto& c : catalog_.classes()) names.push_back(c.name);
    return names;
  }

  std::string config_json() const { return to_json(config_).dump(); }

 private:
  RunConfig config_;
  Backends backends_;
  DescriptionCatalog catalog_;
};

py::tuple aggregate(const F32Array& crops, const F32Array& rows, const std::vector<std::int64_t>& counts, float tau) {
  if (crops.ndim() != 2 || rows.ndim() != 2 || crops.shape(1) != rows.shape(1)) {
    throw ArgumentError("crops and rows must be 2-D with the same width");
  }
  const auto d = static_cast<std::size_t>(rows.shape(1));
  std::vector<std::string> names;
  std::vector<std::vector<std::vector<float>>> groups;
  std::size_t t = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    names.push_back("c" + std::to_string(k));
    groups.emplace_back();
    for (std::int64_t j = 0; j < counts[k]; ++j, ++t) {
      if (t >= static_cast<std::size_t>(rows.shape(0))) throw ArgumentError("counts exceed the number of rows");
      groups.back().emplace_back(rows.data() + t * d, rows.data() + (t + 1) * d);
    }
  }
  if (t != static_cast<std::size_t>(rows.shape(0))) throw ArgumentError("counts must cover every row");
  const auto catalog = DescriptionCatalog::from_rows(names, groups);
  EmbeddingSet set;
  for (py::ssize_t i = 0; i < crops.shape(0); ++i) {
    set.add(l2_normalize(std::vector<float>(crops.data() + i * d, crops.data() + (i + 1) * d)), {});
  }
  const auto table = aggregate_scores(set, catalog, tau);
  return py::make_tuple(table.scores, table.predicted, array_from_tensor(table.weights));
}

}  // namespace

PYBIND11_MODULE(_attnsel, m) {
  m.doc() = "Training-free zero-shot classification by attention-based crop selection";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<InvariantError>(m, "InvariantError", PyExc_RuntimeError);
  py::register_exception<BackendError>(m, "BackendError", PyExc_RuntimeError);

  m.def("softmax", [](const std::vector<float>& v, float temperature) { return softmax(v, temperature); },
        py::arg("values"), py::arg("temperature") = 1.0f);
  m.def(
      "bicubic_resample",
      [](const F32Array& plane, std::int64_t out_h, std::int64_t out_w) {
        return array_from_tensor(bicubic_resample_2d(tensor_from_array(plane), out_h, out_w));
      },
      py::arg("plane"), py::arg("out_h"), py::arg("out_w"));
  m.def("stable_hash", &stable_hash);
  m.def("mix64", &mix64);
  m.def("image_seed", &image_seed, py::arg("global_seed"), py::arg("image_id"));

  m.def("read_tensor", [](const std::filesystem::path& p) { return array_from_tensor(read_tensor(p)); });
  m.def("write_tensor", [](const std::filesystem::path& p, const py::array& a) { write_tensor(tensor_from_array(a), p); });

  m.def("aggregate_scores", &aggregate, py::arg("crops"), py::arg("rows"), py::arg("counts"),
        py::arg("tau") = kDefaultTau,
        "Class scores for crop embeddings against per-class description rows; returns (scores, predicted, weights).");

  m.def("write_synthetic_world", [](const std::filesystem::path& dir) { write_synthetic_world(make_synthetic_world(), dir); });

  m.def(
      "selftest",
      [](std::optional<std::filesystem::path> backend) {
        const auto checks = backend ? run_backend_selftest(*backend) : run_reference_selftest();
        std::vector<py::tuple> out;
        for (const auto& c : checks) out.push_back(py::make_tuple(c.name, c.passed, c.detail));
        return out;
      },
      py::arg("backend") = py::none());

  py::class_<Session>(m, "_Session")
      .def(py::init<const std::string&>())
      .def("classify", &Session::classify, py::arg("image"), py::arg("baseline") = false)
      .def("evaluate", &Session::evaluate, py::arg("dataset"), py::arg("jsonl") = std::filesystem::path{},
           py::arg("baseline") = false)
      .def_property_readonly("class_names", &Session::class_names)
      .def_property_readonly("config_json", &Session::config_json);
}
