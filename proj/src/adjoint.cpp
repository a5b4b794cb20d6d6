#include "dfwi/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <string>

#include "propagator.hpp"

namespace dfwi {

namespace {

void check_compatible(const ShotGather& a, const ShotGather& b, std::size_t shot) {
  if (a.nt != b.nt || a.n_receivers() != b.n_receivers() || a.data.size() != b.data.size()) {
    throw SolverError("misfit: gather shape mismatch at shot " + std::to_string(shot));
  }
  if (std::abs(a.dt - b.dt) > 1e-12 * std::max(a.dt, b.dt)) {
    throw SolverError("misfit: sample interval mismatch at shot " + std::to_string(shot));
  }
}

struct ShotGradient {
  double misfit = 0.0;
  std::vector<double> dj_dw;  // over the padded array, includes G factor
  ShotGather synthetic;
};

// Forward with Lp history, then the transposed recurrence.  The gradient with
// respect to W = dt^2 v^2 is sum_j lam[j+1] * G * L p[j].
ShotGradient shot_gradient(const detail::Propagator& prop, const AcquisitionGeometry& geom, std::size_t shot,
                           const ShotGather& obs, const GradientOptions& opts) {
  const std::size_t n = prop.array_size();
  const int k = prop.substeps();
  const int nf = prop.nt_fine();
  const auto src = prop.source_points(shot);
  const auto rec = prop.receiver_cells();
  const auto& sig = prop.source_signal();
  const auto& g = prop.taper();

  // History is kept only where the gradient is wanted: the model cells when
  // masking, the whole padded grid otherwise.
  const int bw = opts.mask ? prop.boundary_width() : 0;
  const int nxp = opts.mask ? prop.padded_nx() - 2 * bw : prop.padded_nx();
  const int nzp = opts.mask ? prop.padded_nz() - bw : prop.padded_nz();
  const std::size_t cells = static_cast<std::size_t>(nxp) * nzp;

  ShotGradient out;
  out.synthetic.nt = prop.nt_record();
  out.synthetic.dt = prop.dt() * k;
  out.synthetic.source_position = geom.source_positions[shot];
  out.synthetic.receiver_positions = geom.receiver_positions;
  out.synthetic.data.assign(rec.size() * static_cast<std::size_t>(out.synthetic.nt), 0.0);
  if (obs.nt != out.synthetic.nt || obs.n_receivers() != static_cast<int>(rec.size())) {
    throw SolverError("gradient: observed gather shape mismatch at shot " + std::to_string(shot));
  }

  // Segment length: history of Lp for `seg` fine steps is kept at once.
  const std::size_t per_step = cells * sizeof(float);
  int seg = nf;
  if (opts.checkpoint_every > 0) {
    seg = opts.checkpoint_every;
  } else if (per_step * static_cast<std::size_t>(nf) > opts.memory_budget_bytes) {
    seg = std::max<int>(1, static_cast<int>(opts.memory_budget_bytes / per_step));
  }
  const int nseg = (nf - 1 + seg - 1) / seg;  // Lp needed for j = 0 .. nf-2

  auto pack = [&](const double* p, float* dst) {
    for (int izp = 0; izp < nzp; ++izp) {
      const double* src_row = p + prop.index(izp, bw);
      float* dst_row = dst + static_cast<std::size_t>(izp) * nxp;
      for (int ix = 0; ix < nxp; ++ix) dst_row[ix] = static_cast<float>(src_row[ix]);
    }
  };

  std::vector<double> prev(n, 0.0), cur(n, 0.0), lap(n, 0.0);
  // Checkpoint (p[j-1], p[j]) at each segment start.
  std::vector<std::vector<double>> ck_prev, ck_cur;
  if (nseg > 1) {
    ck_prev.resize(nseg);
    ck_cur.resize(nseg);
  }
  // float32 history: the products are accumulated in double.
  std::vector<float> history(static_cast<std::size_t>(std::min(seg, nf - 1)) * cells);

  auto advance = [&](int j, double* pv, double* cu, double* lp) {
    prop.step(pv, cu, lp);
    for (const auto& s : src) pv[s.index] += g[s.index] * s.weight * sig[j];
  };

  for (int j = 0; j + 1 < nf; ++j) {
    const int sidx = j / seg;
    if (nseg > 1 && j % seg == 0) {
      ck_prev[sidx] = prev;
      ck_cur[sidx] = cur;
    }
    advance(j, prev.data(), cur.data(), lap.data());
    if (nseg == 1) pack(lap.data(), history.data() + static_cast<std::size_t>(j) * cells);
    std::swap(prev, cur);
    const int jn = j + 1;
    if (jn % 64 == 0 || jn == nf - 1) detail::check_finite_wavefield(cur.data(), n, jn);
    if (jn % k == 0) {
      const int it = jn / k;
      for (std::size_t r = 0; r < rec.size(); ++r) out.synthetic.data[r * out.synthetic.nt + it] = cur[rec[r]];
    }
  }

  // residual = d_syn - d_obs
  std::vector<double> residual(out.synthetic.data.size());
  double jval = 0.0;
  for (std::size_t i = 0; i < residual.size(); ++i) {
    residual[i] = out.synthetic.data[i] - obs.data[i];
    jval += residual[i] * residual[i];
  }
  out.misfit = 0.5 * jval;

  auto inject_residual = [&](int j, double* lam) {
    if (j % k != 0) return;
    const int it = j / k;
    for (std::size_t r = 0; r < rec.size(); ++r) lam[rec[r]] += residual[r * out.synthetic.nt + it];
  };

  std::vector<double> lam_near(n, 0.0), lam_far(n, 0.0), scratch(n, 0.0);
  std::vector<double> acc(cells, 0.0);
  inject_residual(nf - 1, lam_near.data());  // lam[nf-1]

  for (int s = nseg - 1; s >= 0; --s) {
    const int j0 = s * seg;
    const int j1 = std::min(j0 + seg, nf - 1);  // exclusive
    if (nseg > 1) {
      std::vector<double> pv = ck_prev[s], cu = ck_cur[s];
      for (int j = j0; j < j1; ++j) {
        advance(j, pv.data(), cu.data(), lap.data());
        pack(lap.data(), history.data() + static_cast<std::size_t>(j - j0) * cells);
        std::swap(pv, cu);
      }
    }
    for (int j = j1 - 1; j >= j0; --j) {
      // lam_near holds lam[j+1]
      const float* lp = history.data() + static_cast<std::size_t>(j - j0) * cells;
      for (int izp = 0; izp < nzp; ++izp) {
        const double* __restrict ln = lam_near.data() + prop.index(izp, bw);
        const float* __restrict l = lp + static_cast<std::size_t>(izp) * nxp;
        double* __restrict a = acc.data() + static_cast<std::size_t>(izp) * nxp;
        for (int ix = 0; ix < nxp; ++ix) a[ix] += ln[ix] * l[ix];
      }
      if (j >= 1) {
        prop.adjoint_step(lam_far.data(), lam_near.data(), scratch.data(), lap.data());
        inject_residual(j, lam_far.data());
        std::swap(lam_far, lam_near);
      }
    }
  }

  // Scatter back onto the full padded layout; cells outside the region stay zero.
  out.dj_dw.assign(static_cast<std::size_t>(prop.padded_nx()) * prop.padded_nz(), 0.0);
  for (int izp = 0; izp < nzp; ++izp) {
    for (int ix = 0; ix < nxp; ++ix) {
      const std::size_t c = static_cast<std::size_t>(izp) * nxp + ix;
      out.dj_dw[static_cast<std::size_t>(izp) * prop.padded_nx() + ix + bw] = acc[c] * g[prop.index(izp, ix + bw)];
    }
  }
  return out;
}

}  // namespace

Misfit misfit(const Gathers& d_obs, const Gathers& d_syn) {
  if (d_obs.size() != d_syn.size()) throw SolverError("misfit: shot count mismatch");
  Misfit m;
  m.per_shot.resize(d_obs.size(), 0.0);
  for (std::size_t s = 0; s < d_obs.size(); ++s) {
    check_compatible(d_obs[s], d_syn[s], s);
    double acc = 0.0;
    for (std::size_t i = 0; i < d_obs[s].data.size(); ++i) {
      const double r = d_obs[s].data[i] - d_syn[s].data[i];
      acc += r * r;
    }
    m.per_shot[s] = 0.5 * acc;
  }
  for (double v : m.per_shot) m.value += v;
  return m;
}

GradientResult gradient(const VelocityModel& m, const Gathers& d_obs, const AcquisitionGeometry& geom,
                        const Wavelet& w, const SolverConfig& cfg, const GradientOptions& opts) {
  const detail::Propagator prop(m, geom, w, cfg);
  const std::size_t ns = geom.source_positions.size();
  if (d_obs.size() != ns) throw SolverError("gradient: observed shot count does not match geometry");

  std::vector<ShotGradient> shots(ns);
  if (cfg.jobs <= 1 || ns == 1) {
    for (std::size_t s = 0; s < ns; ++s) shots[s] = shot_gradient(prop, geom, s, d_obs[s], opts);
  } else {
    const std::size_t jobs = std::min<std::size_t>(cfg.jobs, ns);
    std::vector<std::future<void>> workers;
    for (std::size_t t = 0; t < jobs; ++t) {
      workers.push_back(std::async(std::launch::async, [&, t] {
        for (std::size_t s = t; s < ns; s += jobs) shots[s] = shot_gradient(prop, geom, s, d_obs[s], opts);
      }));
    }
    for (auto& f : workers) f.get();
  }

  const int nxp = prop.padded_nx();
  const int nzp = prop.padded_nz();
  const std::size_t cells = static_cast<std::size_t>(nxp) * nzp;
  std::vector<double> dj_dw(cells, 0.0);
  GradientResult res;
  res.misfit.per_shot.resize(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t c = 0; c < cells; ++c) dj_dw[c] += shots[s].dj_dw[c];
    res.misfit.per_shot[s] = shots[s].misfit;
    res.misfit.value += shots[s].misfit;
    res.synthetic.push_back(std::move(shots[s].synthetic));
  }

  // dW/dv = 2 dt^2 v
  const double dt = prop.dt();
  const auto& vp = prop.padded_velocity();
  res.gradient = Gradient(m.grid, 0.0);
  const int bw = prop.boundary_width();
  for (int izp = 0; izp < nzp; ++izp) {
    for (int ixp = 0; ixp < nxp; ++ixp) {
      const bool interior = izp < m.grid.nz && ixp >= bw && ixp < bw + m.grid.nx;
      if (opts.mask && !interior) continue;
      const double gv = dj_dw[static_cast<std::size_t>(izp) * nxp + ixp] * 2.0 * dt * dt * vp[prop.index(izp, ixp)];
      res.gradient.at(prop.model_row_of(izp), prop.model_col_of(ixp)) += gv;
    }
  }
  if (opts.mask) {
    const int rows = std::min(opts.mask_top_rows, m.grid.nz);
    std::fill_n(res.gradient.data.begin(), static_cast<std::size_t>(rows) * m.grid.nx, 0.0);
  }
  for (std::size_t i = 0; i < res.gradient.data.size(); ++i) {
    if (!std::isfinite(res.gradient.data[i])) throw SolverError("gradient: non-finite value");
  }
  return res;
}

}  // namespace dfwi
