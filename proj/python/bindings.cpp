#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dfwi/adjoint.hpp"
#include "dfwi/datasets.hpp"
#include "dfwi/ddpm.hpp"
#include "dfwi/experiment.hpp"
#include "dfwi/fwi.hpp"
#include "dfwi/io.hpp"
#include "dfwi/metrics.hpp"

namespace py = pybind11;
using namespace dfwi;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <class F>
F to_field(const Array& a, double dx, double dz) {
  if (a.ndim() != 2) throw py::value_error("expected a 2D array (nz, nx)");
  GridSpec g{static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), dx, dz};
  return F(g, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Field2D& f) {
  Array out({f.grid.nz, f.grid.nx});
  std::copy(f.data.begin(), f.data.end(), out.mutable_data());
  return out;
}

// (shots, receivers, nt)
Array gathers_to_array(const Gathers& g) {
  if (g.empty()) return Array(std::vector<py::ssize_t>{0, 0, 0});
  const py::ssize_t nr = g[0].n_receivers(), nt = g[0].nt;
  Array out({static_cast<py::ssize_t>(g.size()), nr, nt});
  double* p = out.mutable_data();
  for (const auto& s : g) p = std::copy(s.data.begin(), s.data.end(), p);
  return out;
}

Gathers array_to_gathers(const Array& a, const AcquisitionGeometry& geom, double dt) {
  if (a.ndim() != 3) throw py::value_error("expected gathers shaped (shots, receivers, nt)");
  if (static_cast<std::size_t>(a.shape(0)) != geom.source_positions.size() ||
      static_cast<std::size_t>(a.shape(1)) != geom.receiver_positions.size()) {
    throw py::value_error("gather shape does not match the acquisition geometry");
  }
  Gathers g(a.shape(0));
  const std::size_t per = static_cast<std::size_t>(a.shape(1) * a.shape(2));
  for (std::size_t s = 0; s < g.size(); ++s) {
    g[s].nt = static_cast<int>(a.shape(2));
    g[s].dt = dt;
    g[s].source_position = geom.source_positions[s];
    g[s].receiver_positions = geom.receiver_positions;
    g[s].data.assign(a.data() + s * per, a.data() + (s + 1) * per);
  }
  return g;
}

AcquisitionGeometry make_geometry(std::vector<double> sources, std::vector<double> receivers, double source_depth,
                                  double receiver_depth) {
  AcquisitionGeometry g;
  g.source_positions = std::move(sources);
  g.receiver_positions = std::move(receivers);
  g.source_depth = source_depth;
  g.receiver_depth = receiver_depth;
  return g;
}

Wavelet wavelet_from(const Array& samples, double dt) {
  Wavelet w;
  w.nt = static_cast<int>(samples.size());
  w.dt = dt;
  w.samples.assign(samples.data(), samples.data() + samples.size());
  return w;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Acoustic FWI, adjoint gradients, diffusion priors and evaluation metrics";
  m.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
  py::register_exception<FieldError>(m, "FieldError", PyExc_ValueError);

  py::class_<AcquisitionGeometry>(m, "Acquisition")
      .def(py::init(&make_geometry), py::arg("sources"), py::arg("receivers"), py::arg("source_depth") = 10.0,
           py::arg("receiver_depth") = 10.0)
      .def_readwrite("sources", &AcquisitionGeometry::source_positions)
      .def_readwrite("receivers", &AcquisitionGeometry::receiver_positions)
      .def_readwrite("source_depth", &AcquisitionGeometry::source_depth)
      .def_readwrite("receiver_depth", &AcquisitionGeometry::receiver_depth);

  m.def(
      "surface_acquisition",
      [](int nz, int nx, double dx, int n_sources, int n_receivers) {
        return surface_acquisition({nx, nz, dx, dx}, n_sources, n_receivers);
      },
      py::arg("nz") = 64, py::arg("nx") = 64, py::arg("dx") = 10.0, py::arg("n_sources") = 32,
      py::arg("n_receivers") = 64, "Evenly spread surface sources and receivers snapped to grid nodes.");

  m.def(
      "ricker",
      [](double f0, double dt, int nt, double t0) {
        const auto w = ricker(f0, t0, dt, nt);
        return Array(static_cast<py::ssize_t>(w.samples.size()), w.samples.data());
      },
      py::arg("f0") = 15.0, py::arg("dt") = 1e-3, py::arg("nt") = 1500, py::arg("t0") = -1.0,
      "Ricker wavelet; t0 < 0 selects the default delay 1/f0.");

  m.def(
      "cfl_max_dt", [](const Array& v, double dx) { return cfl_max_dt(to_field<VelocityModel>(v, dx, dx), {}); },
      py::arg("velocity"), py::arg("dx") = 10.0);

  m.def(
      "forward_model",
      [](const Array& v, const AcquisitionGeometry& geom, const Array& wavelet, double dt, double dx, int jobs) {
        SolverConfig cfg;
        cfg.jobs = jobs;
        Gathers g;
        {
          py::gil_scoped_release release;
          g = forward_model(to_field<VelocityModel>(v, dx, dx), geom, wavelet_from(wavelet, dt), cfg);
        }
        return gathers_to_array(g);
      },
      py::arg("velocity"), py::arg("acquisition"), py::arg("wavelet"), py::arg("dt") = 1e-3, py::arg("dx") = 10.0,
      py::arg("jobs") = 1, "Shot gathers shaped (shots, receivers, nt).");

  m.def(
      "gradient",
      [](const Array& v, const Array& observed, const AcquisitionGeometry& geom, const Array& wavelet, double dt,
         double dx, bool mask, int jobs) {
        SolverConfig cfg;
        cfg.jobs = jobs;
        GradientOptions opts;
        opts.mask = mask;
        GradientResult r;
        const auto obs = array_to_gathers(observed, geom, dt);
        {
          py::gil_scoped_release release;
          r = gradient(to_field<VelocityModel>(v, dx, dx), obs, geom, wavelet_from(wavelet, dt), cfg, opts);
        }
        return py::make_tuple(r.misfit.value, to_array(r.gradient));
      },
      py::arg("velocity"), py::arg("observed"), py::arg("acquisition"), py::arg("wavelet"), py::arg("dt") = 1e-3,
      py::arg("dx") = 10.0, py::arg("mask") = true, py::arg("jobs") = 1,
      "Least-squares misfit and its adjoint-state gradient with respect to velocity.");

  m.def(
      "fwi",
      [](const Array& v0, const Array& observed, const AcquisitionGeometry& geom, const Array& wavelet, double dt,
         double dx, int n_iters, double lr, double v_min, double v_max, int jobs) {
        SolverConfig solver;
        solver.jobs = jobs;
        FwiConfig cfg;
        cfg.n_iters = n_iters;
        cfg.lr = lr;
        cfg.v_bounds = {v_min, v_max};
        FwiResult r;
        const auto obs = array_to_gathers(observed, geom, dt);
        {
          py::gil_scoped_release release;
          r = fwi_iterate(to_field<VelocityModel>(v0, dx, dx), obs, geom, wavelet_from(wavelet, dt), solver, cfg);
        }
        return py::make_tuple(to_array(r.model), r.misfit_trace, to_string(r.status));
      },
      py::arg("initial"), py::arg("observed"), py::arg("acquisition"), py::arg("wavelet"), py::arg("dt") = 1e-3,
      py::arg("dx") = 10.0, py::arg("n_iters") = 20, py::arg("lr") = 30.0, py::arg("v_min") = 1500.0,
      py::arg("v_max") = 4500.0, py::arg("jobs") = 1,
      "Projected gradient descent; returns (model, misfit per iteration, status).");

  m.def("families", [] {
    std::vector<std::string> names;
    for (const auto& s : default_family_specs()) names.push_back(s.name());
    return names;
  });
  m.def(
      "synth_model",
      [](const std::string& family, std::uint64_t seed, int nz, int nx, double dx) {
        return to_array(synth_model(family_spec(family), seed, {nx, nz, dx, dx}));
      },
      py::arg("family"), py::arg("seed"), py::arg("nz") = 64, py::arg("nx") = 64, py::arg("dx") = 10.0);
  m.def(
      "gaussian_smooth", [](const Array& f, double sigma) { return to_array(gaussian_smooth(to_field<Field2D>(f, 1, 1), sigma)); },
      py::arg("field"), py::arg("sigma"));
  m.def(
      "gardner_density", [](const Array& v) { return to_array(gardner_density(to_field<VelocityModel>(v, 1, 1))); },
      py::arg("velocity"));

  m.def(
      "mae", [](const Array& a, const Array& b, double lo, double hi) { return mae(to_field<Field2D>(a, 1, 1), to_field<Field2D>(b, 1, 1), {lo, hi}); },
      py::arg("truth"), py::arg("estimate"), py::arg("lo") = 1500.0, py::arg("hi") = 4500.0);
  m.def(
      "mse", [](const Array& a, const Array& b, double lo, double hi) { return mse(to_field<Field2D>(a, 1, 1), to_field<Field2D>(b, 1, 1), {lo, hi}); },
      py::arg("truth"), py::arg("estimate"), py::arg("lo") = 1500.0, py::arg("hi") = 4500.0);
  m.def(
      "ssim", [](const Array& a, const Array& b, double lo, double hi) { return ssim(to_field<Field2D>(a, 1, 1), to_field<Field2D>(b, 1, 1), ValueRange{lo, hi}); },
      py::arg("truth"), py::arg("estimate"), py::arg("lo") = 1500.0, py::arg("hi") = 4500.0);

  m.def(
      "noise_schedule",
      [](int T, double beta_start, double beta_end) {
        const auto s = make_linear_schedule(T, beta_start, beta_end);
        py::dict d;
        d["beta"] = Array(static_cast<py::ssize_t>(s.beta.size()), s.beta.data());
        d["alpha"] = Array(static_cast<py::ssize_t>(s.alpha.size()), s.alpha.data());
        d["alpha_bar"] = Array(static_cast<py::ssize_t>(s.alpha_bar.size()), s.alpha_bar.data());
        return d;
      },
      py::arg("T") = 500, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02);

  m.def(
      "read_field",
      [](const std::string& path) {
        const auto f = read_field(path);
        return py::make_tuple(to_array(f.field), f.kind);
      },
      py::arg("path"));
  m.def(
      "write_field",
      [](const std::string& path, const Array& f, const std::string& kind, double dx) {
        write_field(path, to_field<Field2D>(f, dx, dx), kind);
      },
      py::arg("path"), py::arg("field"), py::arg("kind") = "velocity", py::arg("dx") = 10.0);

  m.def(
      "default_config", [](const std::vector<std::string>& overrides) { return config_to_json(load_config("", overrides)); },
      py::arg("overrides") = std::vector<std::string>{}, "Default experiment configuration as JSON, with a.b=value overrides.");
  m.def(
      "gen_corpus",
      [](const std::string& config_json, const std::string& out_dir) {
        py::gil_scoped_release release;
        return static_cast<int>(run_gen_corpus(config_from_json(config_json), out_dir).entries.size());
      },
      py::arg("config"), py::arg("out_dir"));
  m.def(
      "train",
      [](const std::string& config_json, const std::string& checkpoint) {
        TrainOutcome r;
        {
          py::gil_scoped_release release;
          r = run_train(config_from_json(config_json), checkpoint);
        }
        return r.result.loss_trace;
      },
      py::arg("config"), py::arg("checkpoint"), "Trains a prior and returns the per-step loss.");
  m.def(
      "invert",
      [](const std::string& config_json, const std::string& out_dir) {
        InversionOutcome r;
        {
          py::gil_scoped_release release;
          r = run_invert(config_from_json(config_json), out_dir);
        }
        py::dict d;
        d["condition"] = r.report.condition;
        d["method"] = r.report.method;
        d["mae"] = r.report.mae;
        d["mse"] = r.report.mse;
        d["ssim"] = r.report.ssim;
        d["final"] = to_array(r.final_model);
        d["truth"] = to_array(r.problem.truth);
        d["initial"] = to_array(r.problem.initial);
        return d;
      },
      py::arg("config"), py::arg("out_dir") = "", "Runs one inversion; writes artifacts when out_dir is given.");
  m.def(
      "report",
      [](const std::string& runs_dir, const std::string& out_dir) {
        const auto s = run_report(runs_dir, out_dir);
        py::list rows;
        for (const auto& r : s.aggregated) {
          py::dict d;
          d["condition"] = r.condition;
          d["method"] = r.method;
          d["mae"] = r.mae;
          d["mse"] = r.mse;
          d["ssim"] = r.ssim;
          rows.append(d);
        }
        return rows;
      },
      py::arg("runs_dir"), py::arg("out_dir"));
}
