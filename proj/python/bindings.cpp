#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cpbo/bayes_opt.hpp"
#include "cpbo/cli.hpp"
#include "cpbo/sensitivity.hpp"

namespace py = pybind11;
using namespace cpbo;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

ParamVector to_param_vector(const std::vector<double>& v) {
  if (v.size() != kNumParams) throw InvalidArgument("expected " + std::to_string(kNumParams) + " parameters");
  ParamVector out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

py::dict run_to_dict(const PolycrystalRun& run) {
  py::dict d;
  d["time"] = to_array(run.curve.time);
  d["strain"] = to_array(run.curve.strain);
  d["stress"] = to_array(run.curve.stress);
  d["cycle"] = py::array_t<int>(run.curve.cycle_index.size(), run.curve.cycle_index.data());
  std::vector<double> w;
  for (const auto& g : run.per_grain_final) w.push_back(g.w_fip);
  d["w_fip"] = to_array(w);
  d["failed"] = run.failed;
  d["failure_reason"] = run.failure_reason;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Python bindings for the cpbo library";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  std::vector<std::string> names(kParamNames.begin(), kParamNames.end());
  m.attr("PARAM_NAMES") = names;

  py::class_<MaterialParams>(m, "MaterialParams")
      .def(py::init<>())
      .def_readwrite("n_rate", &MaterialParams::n_rate)
      .def_readwrite("tau_c0", &MaterialParams::tau_c0)
      .def_readwrite("c_geom", &MaterialParams::c_geom)
      .def_readwrite("rho_ssd", &MaterialParams::rho_ssd)
      .def_readwrite("h0", &MaterialParams::h0)
      .def_readwrite("tau_s", &MaterialParams::tau_s)
      .def_readwrite("m_exp", &MaterialParams::m_exp)
      .def_readwrite("h_kin", &MaterialParams::h_kin)
      .def_readwrite("h_dyn", &MaterialParams::h_dyn)
      .def_readwrite("c11", &MaterialParams::c11)
      .def_readwrite("c12", &MaterialParams::c12)
      .def_readwrite("c44", &MaterialParams::c44)
      .def("validate", &MaterialParams::validate)
      .def("calibrated", [](const MaterialParams& p) {
        const ParamVector v = p.calibrated();
        return std::vector<double>(v.begin(), v.end());
      })
      .def_static("from_calibrated",
                  [](const std::vector<double>& v) { return MaterialParams::from_calibrated(to_param_vector(v)); });

  py::class_<LoadingProgram>(m, "LoadingProgram")
      .def(py::init<>())
      .def_readwrite("amplitude", &LoadingProgram::amplitude)
      .def_readwrite("r_ratio", &LoadingProgram::r_ratio)
      .def_readwrite("rate", &LoadingProgram::rate)
      .def_readwrite("cycles", &LoadingProgram::cycles)
      .def_readwrite("steps_per_quarter", &LoadingProgram::steps_per_quarter)
      .def("validate", &LoadingProgram::validate);

  py::class_<Ensemble>(m, "Ensemble")
      .def("__len__", [](const Ensemble& e) { return e.grains.size(); })
      .def_readonly("twin_volume_fraction", &Ensemble::twin_volume_fraction)
      .def_readonly("seed", &Ensemble::seed)
      .def("diameters", [](const Ensemble& e) {
        std::vector<double> d;
        for (const auto& g : e.grains) d.push_back(g.diameter_3d);
        return to_array(d);
      })
      .def("bunge_deg", [](const Ensemble& e) {
        py::array_t<double> out({e.grains.size(), std::size_t{3}});
        auto a = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < e.grains.size(); ++i) {
          const auto b = e.grains[i].orientation.to_bunge_deg();
          for (py::ssize_t k = 0; k < 3; ++k) a(static_cast<py::ssize_t>(i), k) = b[static_cast<std::size_t>(k)];
        }
        return out;
      })
      .def("is_twin", [](const Ensemble& e) {
        std::vector<bool> t;
        for (const auto& g : e.grains) t.push_back(g.is_twin());
        return t;
      })
      .def("to_csv", [](const Ensemble& e) {
        std::ostringstream os;
        write_ensemble_csv(os, e);
        return os.str();
      })
      .def_static("from_csv", [](const std::string& text) {
        std::istringstream is(text);
        return read_ensemble_csv(is);
      });

  m.def(
      "sample_ensemble",
      [](int n_grains, double twin_target, std::uint64_t seed, double mean_2d, double sd_2d) {
        return sample_ensemble(SizeStats{mean_2d, sd_2d}, n_grains, twin_target, seed);
      },
      py::arg("n_grains"), py::arg("twin_target") = 0.0, py::arg("seed") = 0, py::arg("mean_2d") = SizeStats{}.mean_2d,
      py::arg("sd_2d") = SizeStats{}.sd_2d);
  m.def("add_twins", &add_twins, py::arg("ensemble"), py::arg("twin_target"), py::arg("seed"));

  m.def(
      "misorientation",
      [](const std::array<double, 3>& a, const std::array<double, 3>& b) {
        return misorientation(Orientation::from_bunge_deg(a[0], a[1], a[2]), Orientation::from_bunge_deg(b[0], b[1], b[2]));
      },
      py::arg("bunge_a"), py::arg("bunge_b"), "Cubic misorientation angle in degrees between two Bunge triples.");
  m.def(
      "schmid_factor",
      [](const std::array<double, 3>& bunge, const Vec3& axis) {
        return schmid_factor(Orientation::from_bunge_deg(bunge[0], bunge[1], bunge[2]), axis);
      },
      py::arg("bunge"), py::arg("axis"));

  m.def(
      "run_uniaxial",
      [](const Ensemble& e, const MaterialParams& p, const LoadingProgram& prog) {
        PolycrystalRun run;
        {
          py::gil_scoped_release release;
          run = run_uniaxial(e, p, prog);
        }
        return run_to_dict(run);
      },
      py::arg("ensemble"), py::arg("params") = MaterialParams{}, py::arg("program") = LoadingProgram{});

  py::class_<Bounds>(m, "Bounds")
      .def(py::init([](std::vector<double> lo, std::vector<double> hi) {
        Bounds b{std::move(lo), std::move(hi)};
        b.validate();
        return b;
      }))
      .def_static("calibration_default", &Bounds::calibration_default)
      .def_readonly("lower", &Bounds::lower)
      .def_readonly("upper", &Bounds::upper)
      .def("dim", &Bounds::dim);

  m.def("lhs_sample", &lhs_sample, py::arg("bounds"), py::arg("n"), py::arg("seed"));
  m.def("expected_improvement", py::overload_cast<double, double, double>(&expected_improvement), py::arg("mean"),
        py::arg("sd"), py::arg("f_best"));

  py::class_<GpModel>(m, "GpModel")
      .def("predict",
           [](const GpModel& g, const Eigen::VectorXd& x) {
             const GpPrediction p = g.predict(x);
             return py::make_tuple(p.mean, p.variance);
           })
      .def("predict_mean", &GpModel::predict_mean)
      .def_property_readonly("signal_variance", [](const GpModel& g) { return g.kernel().signal_variance; })
      .def_property_readonly("lengthscales", [](const GpModel& g) { return g.kernel().lengthscales; })
      .def_property_readonly("noise_variance", [](const GpModel& g) { return g.kernel().noise_variance; })
      .def("log_marginal_likelihood", &GpModel::log_marginal_likelihood)
      .def("to_json", [](const GpModel& g) {
        std::ostringstream os;
        save_gp(os, g);
        return os.str();
      })
      .def_static("from_json", [](const std::string& s) {
        std::istringstream is(s);
        return load_gp(is);
      });

  m.def(
      "fit_gp",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Bounds& b, int restarts, std::uint64_t seed) {
        GpFitOptions opt;
        opt.restarts = restarts;
        opt.seed = seed;
        py::gil_scoped_release release;
        return fit_gp(x, y, b, opt);
      },
      py::arg("x"), py::arg("y"), py::arg("bounds"), py::arg("restarts") = 8, py::arg("seed") = 0);
  m.def("r2_score", [](const std::vector<double>& t, const std::vector<double>& p) { return r2_score(t, p); });

  m.def(
      "shapley_values",
      [](const ScalarModel& f, const Eigen::VectorXd& x, const Eigen::MatrixXd& background) {
        return shapley_values(f, x, background);
      },
      py::arg("model"), py::arg("x"), py::arg("background"),
      "Exact interventional Shapley values of a Python callable.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a cpbo subcommand and returns (exit_code, stdout, stderr).");
}
