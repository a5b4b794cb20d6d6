#include "dfwi/fwi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace dfwi {

void FwiConfig::validate() const {
  if (n_iters < 0) throw SolverError("fwi: n_iters must be >= 0");
  if (!(lr > 0.0)) throw SolverError("fwi: lr must be > 0");
  if (!(v_bounds.lo < v_bounds.hi)) throw SolverError("fwi: velocity bounds must be ordered");
  if (lambda < 0.0) throw SolverError("fwi: lambda must be >= 0");
}

std::string to_string(FwiStatus s) {
  switch (s) {
    case FwiStatus::completed:
      return "completed";
    case FwiStatus::stalled:
      return "stalled";
    case FwiStatus::diverged:
      return "diverged";
  }
  return "unknown";
}

VelocityModel box_constrain(const VelocityModel& m, VelocityBounds bounds) {
  if (!(bounds.lo <= bounds.hi)) throw SolverError("box_constrain: bounds must be ordered");
  VelocityModel out = m;
  for (auto& v : out.data) v = std::clamp(v, bounds.lo, bounds.hi);
  return out;
}

double tikhonov(const VelocityModel& m, Field2D* grad) {
  const int nx = m.grid.nx;
  const int nz = m.grid.nz;
  if (grad) *grad = Field2D(m.grid, 0.0);
  double r = 0.0;
  for (int iz = 0; iz < nz; ++iz) {
    for (int ix = 0; ix < nx; ++ix) {
      if (ix + 1 < nx) {
        const double d = m.at(iz, ix + 1) - m.at(iz, ix);
        r += d * d;
        if (grad) {
          grad->at(iz, ix + 1) += 2.0 * d;
          grad->at(iz, ix) -= 2.0 * d;
        }
      }
      if (iz + 1 < nz) {
        const double d = m.at(iz + 1, ix) - m.at(iz, ix);
        r += d * d;
        if (grad) {
          grad->at(iz + 1, ix) += 2.0 * d;
          grad->at(iz, ix) -= 2.0 * d;
        }
      }
    }
  }
  return r;
}

FwiResult fwi_iterate(const VelocityModel& m0, const Gathers& d_obs, const AcquisitionGeometry& geom,
                      const Wavelet& w, const SolverConfig& solver, const FwiConfig& cfg, FwiState* state) {
  cfg.validate();
  FwiResult res;
  res.model = m0;
  if (cfg.n_iters == 0) return res;

  FwiState local;
  FwiState& st = state ? *state : local;
  const std::size_t n = m0.data.size();
  if (st.m1.size() != n) {
    st.m1.assign(n, 0.0);
    st.m2.assign(n, 0.0);
    st.step = 0;
  }

  const bool regularize = cfg.tikhonov_enabled && cfg.lambda > 0.0;
  int growth = 0;
  double last = -1.0;
  for (int it = 0; it < cfg.n_iters; ++it) {
    GradientResult gr = gradient(res.model, d_obs, geom, w, solver, cfg.gradient);
    double jval = gr.misfit.value;
    if (regularize) {
      Field2D rg;
      jval += cfg.lambda * tikhonov(res.model, &rg);
      for (std::size_t i = 0; i < n; ++i) gr.gradient.data[i] += cfg.lambda * rg.data[i];
    }
    res.misfit_trace.push_back(jval);
    res.per_shot_trace.push_back(gr.misfit.per_shot);
    res.iterations = it + 1;

    if (last >= 0.0 && jval > last) {
      if (++growth >= 5) {
        res.status = FwiStatus::diverged;
        break;
      }
    } else {
      growth = 0;
    }
    last = jval;

    double gmax = 0.0;
    for (double g : gr.gradient.data) gmax = std::max(gmax, std::abs(g));
    if (gmax == 0.0) {
      if (jval > 0.0) {
        res.status = FwiStatus::stalled;
        break;
      }
      continue;  // zero residual: fixed point
    }

    if (cfg.step_rule == StepRule::fixed_normalized) {
      const double scale = cfg.lr / gmax;
      for (std::size_t i = 0; i < n; ++i) res.model.data[i] -= scale * gr.gradient.data[i];
    } else {
      // Adam on the gradient rescaled to unit max-norm; lr keeps m/s units.
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      ++st.step;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
      for (std::size_t i = 0; i < n; ++i) {
        const double g = gr.gradient.data[i] / gmax;
        st.m1[i] = b1 * st.m1[i] + (1.0 - b1) * g;
        st.m2[i] = b2 * st.m2[i] + (1.0 - b2) * g * g;
        res.model.data[i] -= cfg.lr * (st.m1[i] / c1) / (std::sqrt(st.m2[i] / c2) + eps);
      }
    }
    res.model = box_constrain(res.model, cfg.v_bounds);
  }
  return res;
}

void write_misfit_csv(const std::string& path, const FwiResult& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "iteration,J";
  const std::size_t ns = r.per_shot_trace.empty() ? 0 : r.per_shot_trace.front().size();
  for (std::size_t s = 0; s < ns; ++s) os << ",J_shot" << s;
  os << "\n" << std::setprecision(10);
  for (std::size_t i = 0; i < r.misfit_trace.size(); ++i) {
    os << i << "," << r.misfit_trace[i];
    for (double v : r.per_shot_trace[i]) os << "," << v;
    os << "\n";
  }
}

}  // namespace dfwi
