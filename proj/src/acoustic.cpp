#include "dfwi/acoustic.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <sstream>

#include "propagator.hpp"

namespace dfwi {

void SolverConfig::validate() const {
  if (boundary_width < 10) throw SolverError("boundary_width must be >= 10 cells");
  if (!(boundary_taper >= 0.0)) throw SolverError("boundary_taper must be >= 0");
  if (spatial_order != 2 && spatial_order != 4) throw SolverError("spatial_order must be 2 or 4");
  if (!(courant_safety > 0.0 && courant_safety <= 1.0)) {
    throw SolverError("courant_safety must lie in (0, 1]");
  }
  if (jobs < 1) throw SolverError("jobs must be >= 1");
}

Wavelet ricker(double f0, double t0, double dt, int nt) {
  if (!(f0 > 0.0) || !(dt > 0.0) || nt < 2) throw SolverError("ricker: need f0 > 0, dt > 0, nt >= 2");
  if (f0 > 0.2 / dt) {
    std::ostringstream os;
    os << "ricker: f0 = " << f0 << " Hz aliases at dt = " << dt << " s (limit " << 0.2 / dt << " Hz)";
    throw SolverError(os.str());
  }
  Wavelet w;
  w.nt = nt;
  w.dt = dt;
  w.f0 = f0;
  w.t0 = t0 < 0.0 ? 1.0 / f0 : t0;
  w.samples.resize(nt);
  const double pf2 = std::numbers::pi * std::numbers::pi * f0 * f0;
  for (int i = 0; i < nt; ++i) {
    const double tau = i * dt - w.t0;
    const double a = pf2 * tau * tau;
    w.samples[i] = (1.0 - 2.0 * a) * std::exp(-a);
  }
  return w;
}

double courant_constant(int spatial_order) {
  switch (spatial_order) {
    case 2:
      return 1.0;
    case 4:
      return 0.857;
    default:
      throw SolverError("unsupported spatial order " + std::to_string(spatial_order));
  }
}

double cfl_max_dt(const VelocityModel& m, const SolverConfig& cfg) {
  const double h = std::min(m.grid.dx, m.grid.dz);
  return cfg.courant_safety * courant_constant(cfg.spatial_order) * h / (m.max() * std::numbers::sqrt2);
}

AcquisitionGeometry surface_acquisition(const GridSpec& grid, int n_sources, int n_receivers) {
  if (n_sources < 1 || n_receivers < 1) throw SolverError("acquisition counts must be >= 1");
  if (n_sources > grid.nx || n_receivers > grid.nx) {
    throw SolverError("acquisition counts exceed the number of surface cells (" + std::to_string(grid.nx) + ")");
  }
  auto spread = [&](int n) {
    std::vector<double> xs(n);
    if (n == 1) {
      xs[0] = std::round(0.5 * (grid.nx - 1)) * grid.dx;
      return xs;
    }
    for (int i = 0; i < n; ++i) {
      // snap to cells so the recorded position is the simulated one
      const double cell = std::round(static_cast<double>(i) * (grid.nx - 1) / (n - 1));
      xs[i] = cell * grid.dx;
    }
    return xs;
  };
  AcquisitionGeometry g;
  g.source_positions = spread(n_sources);
  g.receiver_positions = spread(n_receivers);
  g.source_depth = grid.dz;
  g.receiver_depth = grid.dz;
  return g;
}

namespace detail {

Propagator::Propagator(const VelocityModel& m, const AcquisitionGeometry& geom, const Wavelet& w,
                       const SolverConfig& cfg)
    : grid_(m.grid),
      bw_(cfg.boundary_width),
      halo_(cfg.spatial_order / 2),
      nxp_(m.grid.nx + 2 * cfg.boundary_width),
      nzp_(m.grid.nz + cfg.boundary_width),
      stride_(nxp_ + 2 * halo_),
      array_size_(static_cast<std::size_t>(nzp_ + 2 * halo_) * stride_),
      nt_record_(w.nt),
      order_(cfg.spatial_order),
      geom_(&geom),
      injection_(cfg.injection) {
  cfg.validate();
  m.grid.validate();
  m.validate();
  geom.validate(m.grid);
  if (static_cast<int>(w.samples.size()) != w.nt || w.nt < 2) throw SolverError("malformed wavelet");

  const double dt_max = cfl_max_dt(m, cfg);
  substeps_ = 1;
  if (w.dt > dt_max && !cfg.allow_unstable) substeps_ = static_cast<int>(std::ceil(w.dt / dt_max));
  dt_ = w.dt / substeps_;

  v_.assign(array_size_, 0.0);
  w_.assign(array_size_, 0.0);
  g_.assign(array_size_, 0.0);
  g2_.assign(array_size_, 0.0);
  for (int izp = 0; izp < nzp_; ++izp) {
    const int dzs = std::max(izp - (grid_.nz - 1), 0);
    for (int ixp = 0; ixp < nxp_; ++ixp) {
      const int dxs = std::max({bw_ - ixp, ixp - (bw_ + grid_.nx - 1), 0});
      const std::size_t i = index(izp, ixp);
      const double v = m.at(model_row_of(izp), model_col_of(ixp));
      v_[i] = v;
      w_[i] = dt_ * dt_ * v * v;
      const double ax = cfg.boundary_taper * dxs;
      const double az = cfg.boundary_taper * dzs;
      g_[i] = std::exp(-ax * ax) * std::exp(-az * az);
      g2_[i] = g_[i] * g_[i];
    }
  }

  static constexpr double c4[3] = {-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0};
  static constexpr double c2[3] = {-2.0, 1.0, 0.0};
  const double* c = order_ == 4 ? c4 : c2;
  for (int k = 0; k < 3; ++k) {
    cx_[k] = c[k] / (grid_.dx * grid_.dx);
    cz_[k] = c[k] / (grid_.dz * grid_.dz);
  }

  const int nf = nt_fine();
  signal_.assign(nf, 0.0);
  const double scale = dt_ * dt_ / (grid_.dx * grid_.dz);
  for (int j = 0; j < nf; ++j) {
    const int n = j / substeps_;
    const int r = j % substeps_;
    double s = w.samples[n];
    if (r != 0) {
      const double f = static_cast<double>(r) / substeps_;
      s = (1.0 - f) * w.samples[n] + f * w.samples[n + 1];
    }
    signal_[j] = scale * s;
  }
}

int Propagator::model_row_of(int izp) const { return std::min(izp, grid_.nz - 1); }
int Propagator::model_col_of(int ixp) const { return std::clamp(ixp - bw_, 0, grid_.nx - 1); }

void Propagator::laplacian(const double* p, double* out) const {
  const double center = cx_[0] + cz_[0];
  const std::ptrdiff_t s = stride_;
  for (int izp = 0; izp < nzp_; ++izp) {
    const std::size_t row = index(izp, 0);
    const double* __restrict q = p + row;
    double* __restrict o = out + row;
    if (order_ == 4) {
      for (int ix = 0; ix < nxp_; ++ix) {
        o[ix] = center * q[ix] + cx_[1] * (q[ix - 1] + q[ix + 1]) + cx_[2] * (q[ix - 2] + q[ix + 2]) +
                cz_[1] * (q[ix - s] + q[ix + s]) + cz_[2] * (q[ix - 2 * s] + q[ix + 2 * s]);
      }
    } else {
      for (int ix = 0; ix < nxp_; ++ix) {
        o[ix] = center * q[ix] + cx_[1] * (q[ix - 1] + q[ix + 1]) + cz_[1] * (q[ix - s] + q[ix + s]);
      }
    }
  }
}

void Propagator::step(double* prev, const double* cur, double* lap) const {
  laplacian(cur, lap);
  for (int izp = 0; izp < nzp_; ++izp) {
    const std::size_t row = index(izp, 0);
    double* __restrict pp = prev + row;
    const double* __restrict pc = cur + row;
    const double* __restrict l = lap + row;
    const double* __restrict g = g_.data() + row;
    const double* __restrict g2 = g2_.data() + row;
    const double* __restrict ww = w_.data() + row;
    for (int ix = 0; ix < nxp_; ++ix) {
      pp[ix] = g[ix] * (2.0 * pc[ix] + ww[ix] * l[ix]) - g2[ix] * pp[ix];
    }
  }
}

void Propagator::adjoint_step(double* lam_far, const double* lam_near, double* scratch, double* lap) const {
  // scratch <- W G lam_near, then lam_far <- 2 G lam_near + L scratch - G^2 lam_far
  for (int izp = 0; izp < nzp_; ++izp) {
    const std::size_t row = index(izp, 0);
    double* __restrict sc = scratch + row;
    const double* __restrict ln = lam_near + row;
    const double* __restrict g = g_.data() + row;
    const double* __restrict ww = w_.data() + row;
    for (int ix = 0; ix < nxp_; ++ix) sc[ix] = ww[ix] * g[ix] * ln[ix];
  }
  laplacian(scratch, lap);
  for (int izp = 0; izp < nzp_; ++izp) {
    const std::size_t row = index(izp, 0);
    double* __restrict lf = lam_far + row;
    const double* __restrict ln = lam_near + row;
    const double* __restrict l = lap + row;
    const double* __restrict g = g_.data() + row;
    const double* __restrict g2 = g2_.data() + row;
    for (int ix = 0; ix < nxp_; ++ix) lf[ix] = 2.0 * g[ix] * ln[ix] + l[ix] - g2[ix] * lf[ix];
  }
}

std::vector<InjectionPoint> Propagator::source_points(std::size_t shot) const {
  const double x = geom_->source_positions.at(shot) / grid_.dx;
  const double z = geom_->source_depth / grid_.dz;
  if (injection_ == SourceInjection::nearest) {
    return {{model_index(static_cast<int>(std::lround(z)), static_cast<int>(std::lround(x))), 1.0}};
  }
  const int ix0 = std::min(static_cast<int>(std::floor(x)), grid_.nx - 2);
  const int iz0 = std::min(static_cast<int>(std::floor(z)), grid_.nz - 2);
  const double fx = x - ix0;
  const double fz = z - iz0;
  std::vector<InjectionPoint> pts;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double wgt = (a ? fz : 1.0 - fz) * (b ? fx : 1.0 - fx);
      if (wgt != 0.0) pts.push_back({model_index(iz0 + a, ix0 + b), wgt});
    }
  }
  return pts;
}

std::vector<std::size_t> Propagator::receiver_cells() const {
  const int iz = static_cast<int>(std::lround(geom_->receiver_depth / grid_.dz));
  std::vector<std::size_t> cells;
  cells.reserve(geom_->receiver_positions.size());
  for (double x : geom_->receiver_positions) {
    cells.push_back(model_index(iz, static_cast<int>(std::lround(x / grid_.dx))));
  }
  return cells;
}

double Propagator::model_energy(const double* p) const {
  double e = 0.0;
  for (int iz = 0; iz < grid_.nz; ++iz) {
    for (int ix = 0; ix < grid_.nx; ++ix) {
      const double v = p[model_index(iz, ix)];
      e += v * v;
    }
  }
  return e;
}

void check_finite_wavefield(const double* p, std::size_t n, int step) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw SolverError("non-finite wavefield at fine step " + std::to_string(step));
    }
  }
}

}  // namespace detail

namespace {

ShotGather run_shot(const detail::Propagator& prop, const AcquisitionGeometry& geom, std::size_t shot,
                    std::vector<double>* energy) {
  const std::size_t n = prop.array_size();
  std::vector<double> prev(n, 0.0), cur(n, 0.0), lap(n, 0.0);
  const auto src = prop.source_points(shot);
  const auto rec = prop.receiver_cells();
  const auto& sig = prop.source_signal();
  const auto& g = prop.taper();
  const int k = prop.substeps();
  const int nf = prop.nt_fine();

  ShotGather out;
  out.nt = prop.nt_record();
  out.dt = prop.dt() * k;
  out.source_position = geom.source_positions[shot];
  out.receiver_positions = geom.receiver_positions;
  out.data.assign(rec.size() * static_cast<std::size_t>(out.nt), 0.0);
  if (energy) energy->assign(nf, 0.0);

  // p[0] = 0 so record sample 0 is zero; p[j+1] uses source sample j.
  for (int j = 0; j + 1 < nf; ++j) {
    prop.step(prev.data(), cur.data(), lap.data());
    for (const auto& s : src) prev[s.index] += g[s.index] * s.weight * sig[j];
    std::swap(prev, cur);
    const int jn = j + 1;
    if (energy) (*energy)[jn] = prop.model_energy(cur.data());
    if (jn % 64 == 0 || jn == nf - 1) detail::check_finite_wavefield(cur.data(), n, jn);
    if (jn % k == 0) {
      const int it = jn / k;
      for (std::size_t r = 0; r < rec.size(); ++r) out.data[r * out.nt + it] = cur[rec[r]];
    }
  }
  return out;
}

}  // namespace

ShotGather simulate_shot(const VelocityModel& m, const AcquisitionGeometry& geom, std::size_t shot,
                         const Wavelet& w, const SolverConfig& cfg, std::vector<double>* energy_trace) {
  const detail::Propagator prop(m, geom, w, cfg);
  if (shot >= geom.source_positions.size()) throw SolverError("shot index out of range");
  return run_shot(prop, geom, shot, energy_trace);
}

std::vector<ShotGather> forward_model(const VelocityModel& m, const AcquisitionGeometry& geom,
                                      const Wavelet& w, const SolverConfig& cfg) {
  const detail::Propagator prop(m, geom, w, cfg);
  const std::size_t ns = geom.source_positions.size();
  std::vector<ShotGather> out(ns);
  if (cfg.jobs <= 1 || ns == 1) {
    for (std::size_t s = 0; s < ns; ++s) out[s] = run_shot(prop, geom, s, nullptr);
    return out;
  }
  std::vector<std::future<void>> workers;
  const std::size_t jobs = std::min<std::size_t>(cfg.jobs, ns);
  for (std::size_t t = 0; t < jobs; ++t) {
    workers.push_back(std::async(std::launch::async, [&, t] {
      for (std::size_t s = t; s < ns; s += jobs) out[s] = run_shot(prop, geom, s, nullptr);
    }));
  }
  for (auto& f : workers) f.get();
  return out;
}

}  // namespace dfwi
