#include "dfwi/diffwi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "dfwi/datasets.hpp"
#include "dfwi/metrics.hpp"

namespace dfwi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t tile_seed(std::uint64_t seed, int tile) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(tile + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

nn::Tensor to_tensor(const Field2D& f) {
  nn::Tensor t(nn::Shape{1, 1, f.grid.nz, f.grid.nx});
  for (std::size_t i = 0; i < f.data.size(); ++i) t.v[i] = static_cast<nn::Real>(f.data[i]);
  return t;
}

Field2D window(const Field2D& f, int z0, int x0, int n) {
  Field2D out(GridSpec{n, n, f.grid.dx, f.grid.dz});
  for (int iz = 0; iz < n; ++iz)
    for (int ix = 0; ix < n; ++ix) out.at(iz, ix) = f.at(z0 + iz, x0 + ix);
  return out;
}

std::vector<int> tile_origins(int n, int size, int overlap) {
  std::vector<int> o{0};
  const int step = std::max(1, size - overlap);
  while (o.back() + size < n) o.push_back(std::min(o.back() + step, n - size));
  return o;
}

// Blend weight along one axis: ramps over the overlap except at the domain edge.
double ramp(int i, int size, int overlap, bool first, bool last) {
  double w = 1.0;
  if (!first) w = std::min(w, (i + 1.0) / (overlap + 1.0));
  if (!last) w = std::min(w, (size - i) / (overlap + 1.0));
  return w;
}

// Reverse chain on a batch of normalized crops; returns the raw state at t_to.
nn::Tensor chain(const nn::Tensor& x0, const nn::Tensor& cond, int t, int t_to, const DiffusionPrior& prior,
                 std::uint64_t seed) {
  const nn::Tensor eps = gaussian_like(x0.shape, seed, NoiseStream::renoise, t);
  nn::Tensor xt = q_sample(x0, t, eps, prior.schedule);
  return reverse_chain(network_predictor(*prior.net, cond), std::move(xt), t, t_to, prior.schedule, seed);
}

VelocityModel from_state(const nn::Tensor& x, const GridSpec& g, const DiffusionPrior& prior) {
  NormalizedField nf;
  nf.grid = g;
  nf.data.resize(g.size());
  for (std::size_t i = 0; i < nf.data.size(); ++i) nf.data[i] = std::clamp(static_cast<double>(x.v[i]), -1.0, 1.0);
  nf.v_min = prior.velocity_bounds.lo;
  nf.v_max = prior.velocity_bounds.hi;
  return denormalize(nf);
}

}  // namespace

std::string to_string(ConditionSource c) {
  switch (c) {
    case ConditionSource::true_density: return "true_density";
    case ConditionSource::gardner_of_initial: return "gardner_of_initial";
    case ConditionSource::gardner_of_current: return "gardner_of_current";
  }
  return "?";
}

ConditionSource condition_source_from_string(const std::string& s) {
  for (auto c : {ConditionSource::true_density, ConditionSource::gardner_of_initial, ConditionSource::gardner_of_current}) {
    if (to_string(c) == s) return c;
  }
  throw DdpmError("unknown condition source '" + s + "'");
}

void DiffwiConfig::validate(const NoiseSchedule& s) const {
  if (t_start < 0 || t_start > s.T) {
    throw DdpmError("t_start " + std::to_string(t_start) + " outside [0, " + std::to_string(s.T) + "]");
  }
  if (fwi_iters_per_step < 0) throw DdpmError("fwi_iters_per_step must be >= 0");
  if (stride < 1) throw DdpmError("stride must be >= 1");
  if (tile_overlap < 0) throw DdpmError("tile_overlap must be >= 0");
}

Field2D condition_field(const VelocityModel& source, const DiffusionPrior& prior) {
  if (!prior.conditional) return Field2D(source.grid, 0.0);
  return to_signed_unit(gardner_density(source), gardner_range(prior.velocity_bounds));
}

int choose_t_start(const VelocityModel& m0, const PriorReference* ref, const NoiseSchedule& s) {
  if (!ref || ref->members.empty()) return std::max(1, s.T / 5);
  const double lo = ref->velocity_bounds.lo, hi = ref->velocity_bounds.hi;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : ref->members) {
    if (r.data.size() != m0.data.size()) throw DdpmError("reference member grid differs from the initial model");
    double acc = 0.0;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
      const double x = 2.0 * (m0.data[i] - lo) / (hi - lo) - 1.0;
      acc += (x - r.data[i]) * (x - r.data[i]);
    }
    best = std::min(best, std::sqrt(acc / static_cast<double>(r.data.size())));
  }
  for (int t = 1; t <= s.T; ++t) {
    if (std::sqrt(1.0 - s.abar(t)) >= best) return t;
  }
  return s.T;
}

VelocityModel diffusion_correct(const VelocityModel& m, int t, int t_to, const Field2D& cond,
                                const DiffusionPrior& prior, const DiffwiConfig& cfg) {
  if (!prior.net) throw DdpmError("diffusion correction needs a trained network");
  const int S = prior.net->architecture().image_size;
  const GridSpec g = m.grid;
  auto normalized = [&](const Field2D& f) {
    return Field2D(normalize(VelocityModel(f.grid, f.data), prior.velocity_bounds.lo, prior.velocity_bounds.hi));
  };

  if (g.nx == S && g.nz == S) {
    const auto x = chain(to_tensor(normalized(m)), to_tensor(cond), t, t_to, prior, cfg.seed);
    return from_state(x, g, prior);
  }
  if (cfg.allow_tiling && g.nx >= S && g.nz >= S) {
    const auto oz = tile_origins(g.nz, S, cfg.tile_overlap);
    const auto ox = tile_origins(g.nx, S, cfg.tile_overlap);
    const Field2D xn = normalized(m);
    std::vector<double> acc(g.size(), 0.0), wsum(g.size(), 0.0);
    int tile = 0;
    for (std::size_t a = 0; a < oz.size(); ++a) {
      for (std::size_t b = 0; b < ox.size(); ++b, ++tile) {
        const auto x = chain(to_tensor(window(xn, oz[a], ox[b], S)), to_tensor(window(cond, oz[a], ox[b], S)), t, t_to,
                             prior, tile_seed(cfg.seed, tile));
        for (int iz = 0; iz < S; ++iz) {
          const double wz = ramp(iz, S, cfg.tile_overlap, a == 0, a + 1 == oz.size());
          for (int ix = 0; ix < S; ++ix) {
            const double w = wz * ramp(ix, S, cfg.tile_overlap, b == 0, b + 1 == ox.size());
            const std::size_t k = static_cast<std::size_t>(oz[a] + iz) * g.nx + ox[b] + ix;
            acc[k] += w * std::clamp(static_cast<double>(x.v[iz * S + ix]), -1.0, 1.0);
            wsum[k] += w;
          }
        }
      }
    }
    NormalizedField nf;
    nf.grid = g;
    nf.data.resize(g.size());
    for (std::size_t k = 0; k < acc.size(); ++k) nf.data[k] = acc[k] / wsum[k];
    nf.v_min = prior.velocity_bounds.lo;
    nf.v_max = prior.velocity_bounds.hi;
    return denormalize(nf);
  }
  if (cfg.allow_resample) {
    const Field2D small = resample_bilinear(m, S, S);
    const Field2D small_cond = resample_bilinear(cond, S, S);
    const auto x = chain(to_tensor(normalized(small)), to_tensor(small_cond), t, t_to, prior, cfg.seed);
    const VelocityModel corrected = from_state(x, small.grid, prior);
    Field2D back = resample_bilinear(corrected, g.nz, g.nx);
    return VelocityModel(g, std::move(back.data));
  }
  throw DdpmError("model grid " + std::to_string(g.nz) + "x" + std::to_string(g.nx) + " does not match the network crop " +
                  std::to_string(S) + "x" + std::to_string(S) + " (enable tiling or resampling)");
}

VelocityModel warm_started_sample(const VelocityModel& m0, const Field2D& cond, const DiffusionPrior& prior,
                                  int t_start, std::uint64_t seed, VelocityBounds bounds) {
  const NormalizedField x0 = normalize(m0, prior.velocity_bounds.lo, prior.velocity_bounds.hi);
  const auto x = chain(to_tensor(x0), to_tensor(cond), t_start, 0, prior, seed);
  return box_constrain(from_state(x, m0.grid, prior), bounds);
}

DiffwiResult diffusion_fwi(const VelocityModel& m0, const Gathers& d_obs, const AcquisitionGeometry& geom,
                           const Wavelet& w, const SolverConfig& solver, const FwiConfig& fwi,
                           const DiffusionPrior& prior, const DiffwiConfig& cfg, const VelocityModel* truth,
                           const DensityModel* true_density) {
  prior.schedule.validate();
  cfg.validate(prior.schedule);
  fwi.validate();
  if (cfg.t_start > 0 && !prior.net) throw DdpmError("diffusion_fwi needs a trained network");

  DiffwiResult r;
  FwiConfig inner = fwi;
  inner.n_iters = cfg.fwi_iters_per_step;
  FwiState state;

  auto record = [&](int step, int t, double J, const VelocityModel& m) {
    DiffwiStep d{step, t, J, kNaN, kNaN, kNaN};
    if (truth) {
      const auto e = evaluate(*truth, m, prior.velocity_bounds, "", "");
      d.mae = e.mae;
      d.mse = e.mse;
      d.ssim = e.ssim;
    }
    r.diagnostics.push_back(d);
    if (cfg.keep_snapshots) r.snapshots.push_back(m);
  };
  auto run_fwi = [&](const VelocityModel& m) {
    FwiResult fr = fwi_iterate(m, d_obs, geom, w, solver, inner, &state);
    r.misfit_trace.insert(r.misfit_trace.end(), fr.misfit_trace.begin(), fr.misfit_trace.end());
    if (fr.status != FwiStatus::completed) r.fwi_status = fr.status;
    const double J = fr.misfit_trace.empty() ? kNaN : fr.misfit_trace.back();
    return std::make_pair(std::move(fr.model), J);
  };

  if (cfg.t_start == 0) {
    auto [m, J] = cfg.fwi_iters_per_step > 0 ? run_fwi(m0) : std::make_pair(m0, kNaN);
    record(0, 0, J, m);
    r.model = std::move(m);
    return r;
  }

  Field2D cond_fixed;
  if (cfg.condition_source == ConditionSource::true_density && prior.conditional) {
    if (true_density) {
      cond_fixed = to_signed_unit(*true_density, gardner_range(prior.velocity_bounds));
    } else if (truth) {
      cond_fixed = condition_field(*truth, prior);
    } else {
      throw DdpmError("condition source true_density needs the true model or density");
    }
  } else if (cfg.condition_source != ConditionSource::gardner_of_current) {
    cond_fixed = condition_field(m0, prior);
  }

  const int S = prior.net->architecture().image_size;
  const bool exact = m0.grid.nx == S && m0.grid.nz == S;
  VelocityModel m = m0;
  std::optional<nn::Tensor> carried;
  int step = 0;
  for (int t = cfg.t_start; t >= 1; t -= cfg.stride, ++step) {
    double J = kNaN;
    if (cfg.fwi_iters_per_step > 0) {
      auto [next, j] = run_fwi(m);
      m = std::move(next);
      J = j;
    }
    const int t_to = std::max(t - cfg.stride, 0);
    const Field2D cond = cfg.condition_source == ConditionSource::gardner_of_current ? condition_field(m, prior)
                                                                                    : cond_fixed;
    if (exact && cfg.fwi_iters_per_step == 0 && carried) {
      carried = reverse_chain(network_predictor(*prior.net, to_tensor(cond)), std::move(*carried), t, t_to,
                              prior.schedule, cfg.seed);
      m = box_constrain(from_state(*carried, m.grid, prior), fwi.v_bounds);
    } else if (exact) {
      const NormalizedField x0 = normalize(m, prior.velocity_bounds.lo, prior.velocity_bounds.hi);
      carried = chain(to_tensor(x0), to_tensor(cond), t, t_to, prior, cfg.seed);
      m = box_constrain(from_state(*carried, m.grid, prior), fwi.v_bounds);
    } else {
      DiffwiConfig c = cfg;
      c.seed = tile_seed(cfg.seed, -1 - t);
      m = box_constrain(diffusion_correct(m, t, t_to, cond, prior, c), fwi.v_bounds);
    }
    record(step, t, J, m);
  }
  r.model = std::move(m);
  return r;
}

void write_diagnostics_csv(const std::string& path, const DiffwiResult& r) {
  std::ofstream os(path);
  if (!os) throw DdpmError("cannot write " + path);
  os << "outer_step,t,J,mae,mse,ssim\n";
  os.precision(9);
  for (const auto& d : r.diagnostics) {
    os << d.outer_step << ',' << d.t << ',' << d.J << ',' << d.mae << ',' << d.mse << ',' << d.ssim << '\n';
  }
}

}  // namespace dfwi
