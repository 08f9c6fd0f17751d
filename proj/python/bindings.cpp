// Python bindings for the DeepLight core. Volumes cross the boundary as
// C-ordered numpy arrays indexed [z, y, x] (runs: [t, z, y, x]).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstring>
#include <string>

#include "deeplight/baselines.hpp"
#include "deeplight/brainmaps.hpp"
#include "deeplight/config.hpp"
#include "deeplight/error.hpp"
#include "deeplight/io.hpp"
#include "deeplight/lrp.hpp"
#include "deeplight/phantom.hpp"
#include "deeplight/preprocess.hpp"

namespace py = pybind11;
using namespace deeplight;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Array32 = py::array_t<float, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Volume3D& v) {
  Array out({v.shape.z, v.shape.y, v.shape.x});
  std::copy(v.data.begin(), v.data.end(), out.mutable_data());
  return out;
}

Volume3D from_numpy(const Array& a, double voxel_mm) {
  if (a.ndim() != 3) throw InputError("expected a 3D array indexed [z, y, x]");
  Volume3D v({static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(1)),
              static_cast<std::size_t>(a.shape(0))},
             voxel_mm);
  std::copy(a.data(), a.data() + a.size(), v.data.begin());
  return v;
}

Array32 run_to_numpy(const Volume4D& r) {
  Array32 out({r.timepoints, r.shape.z, r.shape.y, r.shape.x});
  std::copy(r.data.begin(), r.data.end(), out.mutable_data());
  return out;
}

Volume4D run_from_numpy(const Array32& a, double voxel_mm, double tr_s) {
  if (a.ndim() != 4) throw InputError("expected a 4D array indexed [t, z, y, x]");
  Volume4D r({static_cast<std::size_t>(a.shape(3)), static_cast<std::size_t>(a.shape(2)),
              static_cast<std::size_t>(a.shape(1))},
             static_cast<std::size_t>(a.shape(0)), voxel_mm, tr_s);
  std::copy(a.data(), a.data() + a.size(), r.data.begin());
  return r;
}

py::array_t<bool> to_bool(const std::vector<char>& keep) {
  py::array_t<bool> out(static_cast<py::ssize_t>(keep.size()));
  std::transform(keep.begin(), keep.end(), out.mutable_data(), [](char c) { return c != 0; });
  return out;
}

std::vector<char> from_bool(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

struct Model {
  model::DeepLightParams params;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "DeepLight core: decoder, relevance propagation and brain-map utilities";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_RuntimeError);

  m.attr("STATES") = py::make_tuple("body", "face", "place", "tool");

  py::class_<Model>(m, "Model")
      .def_static(
          "init",
          [](std::size_t x, std::size_t y, std::uint64_t seed) {
            return Model{model::init_params(model::ArchSpec::deeplight(x, y), seed)};
          },
          py::arg("slice_x"), py::arg("slice_y"), py::arg("seed") = 1)
      .def_static(
          "load", [](const std::string& path) { return Model{io::read_checkpoint(path)}; }, py::arg("path"))
      .def("save", [](const Model& self, const std::string& path) { io::write_checkpoint(path, self.params); })
      .def_property_readonly("parameter_count",
                             [](const Model& self) {
                               std::size_t n = 0;
                               for (std::size_t i = 0; i < self.params.params.size(); ++i) n += self.params.params[i].size();
                               return n;
                             })
      .def(
          "decode",
          [](const Model& self, const Array& volume) {
            const auto d = model::decode(from_numpy(volume, 2.0), self.params);
            return py::make_tuple(d.predicted, std::vector<double>(d.posterior.data().begin(), d.posterior.data().end()));
          },
          py::arg("volume"), "Returns (predicted state, posterior).")
      .def(
          "relevance",
          [](const Model& self, const Array& volume, std::size_t target, double epsilon) {
            const auto r = lrp::relevance_for(self.params, model::slice_volume(from_numpy(volume, 2.0)), target,
                                              {epsilon});
            return py::make_tuple(to_numpy(r.relevance), r.fa);
          },
          py::arg("volume"), py::arg("target"), py::arg("epsilon") = 1e-3,
          "Relevance of the target logit; returns (volume, logit).");

  m.def(
      "phantom_subject",
      [](std::size_t subject, const std::string& config) {
        const auto spec = config.empty() ? RunConfig{}.phantom : load_config(config).phantom;
        const auto s = phantom::generate_subject(spec, subject);
        py::list runs, labels, offsets;
        for (std::size_t r = 0; r < s.runs.size(); ++r) {
          runs.append(run_to_numpy(s.runs[r]));
          labels.append(s.design.runs[r].labels);
          offsets.append(s.design.runs[r].block_offset);
        }
        py::dict out;
        out["runs"] = runs;
        out["labels"] = labels;
        out["block_offset"] = offsets;
        out["test"] = s.test;
        return out;
      },
      py::arg("subject") = 0, py::arg("config") = "");

  m.def(
      "read_vol1", [](const std::string& path) { return run_to_numpy(io::read_vol1(path)); }, py::arg("path"));
  m.def(
      "write_vol1",
      [](const std::string& path, const Array32& run, double voxel_mm, double tr_s) {
        io::write_vol1(path, run_from_numpy(run, voxel_mm, tr_s));
      },
      py::arg("path"), py::arg("run"), py::arg("voxel_mm") = 2.0, py::arg("tr_s") = 0.72);

  m.def("config_ini", [](const std::string& path) { return to_ini(path.empty() ? RunConfig{} : load_config(path)); },
        py::arg("path") = "", "Fully resolved configuration as INI text.");

  m.def("hrf", &baselines::hrf_samples, py::arg("tr_s") = 0.72);
  m.def("highpass", &preprocess::highpass, py::arg("series"), py::arg("cutoff_s") = 128.0, py::arg("tr_s") = 0.72);
  m.def("detrend_standardize", &preprocess::detrend_standardize, py::arg("series"));
  m.def(
      "smooth", [](const Array& v, double fwhm_mm, double voxel_mm) {
        return to_numpy(preprocess::gaussian_smooth(from_numpy(v, voxel_mm), fwhm_mm));
      },
      py::arg("volume"), py::arg("fwhm_mm") = 3.0, py::arg("voxel_mm") = 2.0);

  m.def("percentile", &maps::percentile, py::arg("values"), py::arg("q"));
  m.def(
      "threshold_percentile",
      [](const std::vector<double>& values, double q) { return to_bool(maps::threshold_percentile(values, q).keep); },
      py::arg("values"), py::arg("q") = 90.0);
  m.def(
      "threshold_fdr", [](const std::vector<double>& p, double rate) { return to_bool(maps::threshold_fdr(p, rate).keep); },
      py::arg("p"), py::arg("rate") = 0.1);
  m.def(
      "f1",
      [](const py::array_t<bool, py::array::c_style | py::array::forcecast>& source,
         const py::array_t<bool, py::array::c_style | py::array::forcecast>& target) {
        const auto r = maps::f1_similarity(from_bool(source), from_bool(target));
        return py::make_tuple(r.precision, r.recall, r.f1);
      },
      py::arg("source"), py::arg("target"), "Returns (precision, recall, f1).");
}
