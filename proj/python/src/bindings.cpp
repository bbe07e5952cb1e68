#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <sstream>

#include "wisa/cli/commands.hpp"
#include "wisa/errors.hpp"
#include "wisa/mopa/mopa.hpp"
#include "wisa/physchema/annotation.hpp"
#include "wisa/physchema/categories.hpp"
#include "wisa/physmodule/physical_module.hpp"
#include "wisa/synthphys/dataset.hpp"
#include "wisa/synthphys/scenario.hpp"
#include "wisa/trainer/loss.hpp"

namespace py = pybind11;
namespace nc = wisa::numcore;
using wisa::mopa::GatingVector;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

nc::Tensor to_tensor(const Array& a) {
  nc::Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<double> data(a.data(), a.data() + a.size());
  return nc::Tensor(std::move(shape), std::move(data));
}

Array to_array(const nc::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::memcpy(out.mutable_data(), t.data().data(), t.size() * sizeof(double));
  return out;
}

GatingVector to_gate(const std::vector<double>& v) {
  if (v.size() != wisa::kNumCategories) throw wisa::DimensionError("gate must have 29 entries");
  GatingVector g;
  std::copy(v.begin(), v.end(), g.values.begin());
  return g;
}

// JSON crosses the boundary as text; the Python side decodes it.
py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
nlohmann::json to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Physics-conditioned toy video diffusion: schema, expert attention, data and tooling.";

  py::register_exception<wisa::ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<wisa::DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<wisa::UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<wisa::NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<wisa::ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<wisa::IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<wisa::DatasetError>(m, "DatasetError", PyExc_RuntimeError);

  m.attr("NUM_CATEGORIES") = wisa::kNumCategories;

  m.def("categories", [] {
    py::list out;
    for (int id = 1; id <= static_cast<int>(wisa::kNumCategories); ++id) {
      const auto& c = wisa::physchema::category(id);
      out.append(py::make_tuple(c.id, std::string(c.name), std::string(wisa::physchema::group_name(c.group))));
    }
    return out;
  }, "List of (id, name, group) for the 29 categories.");

  m.def("validate_annotation", [](const py::object& doc, bool strict) {
    const auto a = wisa::physchema::from_json(to_json(doc));
    std::vector<std::string> out;
    for (const auto& v : wisa::physchema::validate(a, strict)) out.push_back(v.message());
    return out;
  }, py::arg("annotation"), py::arg("strict") = true, "Violation messages of a parsed annotation dict.");

  m.def("perturb", [](const std::vector<double>& gate, double prob, std::uint64_t seed) {
    nc::Rng rng(seed);
    const auto g = wisa::mopa::perturb(to_gate(gate), prob, rng);
    return std::vector<double>(g.values.begin(), g.values.end());
  }, py::arg("gate"), py::arg("prob") = wisa::mopa::kDefaultPerturbProb, py::arg("seed") = 0);

  py::class_<wisa::mopa::MoPAWeights>(m, "MoPAWeights")
      .def_static("random", [](std::size_t model_dim, std::size_t head_dim, std::uint64_t seed) {
        nc::Rng rng(seed);
        return wisa::mopa::MoPAWeights::random(model_dim, head_dim, rng);
      }, py::arg("model_dim"), py::arg("head_dim"), py::arg("seed") = 0)
      .def_readonly("head_dim", &wisa::mopa::MoPAWeights::head_dim)
      .def_property_readonly("wq", [](const wisa::mopa::MoPAWeights& w) { return to_array(w.wq); })
      .def_property_readonly("bq", [](const wisa::mopa::MoPAWeights& w) { return to_array(w.bq); })
      .def_property_readonly("wk", [](const wisa::mopa::MoPAWeights& w) { return to_array(w.wk); })
      .def_property_readonly("bk", [](const wisa::mopa::MoPAWeights& w) { return to_array(w.bk); })
      .def_property_readonly("wv", [](const wisa::mopa::MoPAWeights& w) { return to_array(w.wv); })
      .def_property_readonly("bv", [](const wisa::mopa::MoPAWeights& w) { return to_array(w.bv); })
      .def_property_readonly("wo", [](const wisa::mopa::MoPAWeights& w) { return to_array(w.wo); });

  m.def("mopa_forward", [](const Array& f, const std::vector<double>& gate, const wisa::mopa::MoPAWeights& w) {
    return to_array(wisa::mopa::mopa_forward(to_tensor(f), to_gate(gate), w));
  }, py::arg("features"), py::arg("gate"), py::arg("weights"), "Gated expert attention of an (N, D) array.");

  m.def("attention_maps", [](const Array& f, const wisa::mopa::MoPAWeights& w) {
    std::vector<Array> out;
    for (const auto& a : wisa::mopa::attention_maps(to_tensor(f), w)) out.push_back(to_array(a));
    return out;
  }, py::arg("features"), py::arg("weights"));

  m.def("bce_multilabel", [](const std::vector<double>& probs, const std::vector<double>& target) {
    nc::Tape tape;
    const auto p = tape.constant(nc::Tensor({probs.size()}, probs));
    return wisa::physmodule::bce_multilabel(p, target).value()[0];
  }, py::arg("probs"), py::arg("target"));

  m.def("combined_loss", [](double l_diffusion, double l_pc, double lambda) {
    nc::Tape tape;
    const auto d = tape.leaf(nc::Tensor::scalar(l_diffusion));
    const auto c = tape.leaf(nc::Tensor::scalar(l_pc));
    const auto total = wisa::trainer::combined_loss(d, c, lambda);
    tape.backward(total);
    return py::make_tuple(total.value()[0], tape.grad(d)[0], tape.grad(c)[0]);
  }, py::arg("l_diffusion"), py::arg("l_pc"), py::arg("lam"),
     "(value, d/d l_diffusion, d/d l_pc) of the balanced loss.");

  m.def("scenario_kinds", [] {
    std::vector<std::string> out;
    for (auto k : wisa::synthphys::all_kinds()) out.emplace_back(wisa::synthphys::kind_name(k));
    return out;
  });

  m.def("generate_clip", [](const std::string& kind, std::uint64_t seed, std::size_t frames, std::size_t height,
                            std::size_t width) {
    nc::Rng rng = nc::Rng::derive(seed, 0);
    const auto s = wisa::synthphys::Scenario::sample(wisa::synthphys::parse_kind(kind), rng, frames, height, width);
    const auto clip = wisa::synthphys::generate(s, seed);
    return py::make_tuple(to_array(clip.frames), from_json(wisa::physchema::to_json(clip.annotation)),
                          from_json(wisa::synthphys::scenario_to_json(s)));
  }, py::arg("kind"), py::arg("seed") = 0, py::arg("frames") = 8, py::arg("height") = 16, py::arg("width") = 16,
     "(frames array, annotation dict, scenario dict) for a sampled scenario of the given kind.");

  m.def("make_dataset", [](const std::string& out_dir, std::size_t count, std::uint64_t seed, double val_fraction,
                           std::size_t frames, std::size_t height, std::size_t width) {
    auto spec = wisa::synthphys::DatasetSpec::defaults(count, seed);
    spec.val_fraction = val_fraction;
    spec.frames = frames;
    spec.height = height;
    spec.width = width;
    py::gil_scoped_release release;
    wisa::synthphys::make_dataset(spec, out_dir);
  }, py::arg("out_dir"), py::arg("count"), py::arg("seed") = 0, py::arg("val_fraction") = 0.2, py::arg("frames") = 8,
     py::arg("height") = 16, py::arg("width") = 16);

  m.def("read_clip", [](const std::string& path) { return to_array(wisa::synthphys::read_clip(path)); });

  m.def("dataset_stats", [](const std::string& data_dir) {
    std::ostringstream log;
    return from_json(wisa::cli::cmd_stats(data_dir, log));
  });

  m.def("classify", [](const std::string& checkpoint, const std::string& data_dir, const std::string& clip_id,
                       std::size_t timestep, std::uint64_t seed, const std::string& gate) {
    std::ostringstream log;
    return from_json(wisa::cli::cmd_classify(checkpoint, data_dir, clip_id, seed, timestep,
                                             wisa::cli::parse_gate_mode(gate), log));
  }, py::arg("checkpoint"), py::arg("data_dir"), py::arg("clip_id"), py::arg("timestep") = 10, py::arg("seed") = 0,
     py::arg("gate") = "true");
}
