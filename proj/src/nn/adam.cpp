#include "dfwi/nn/adam.hpp"

#include <cmath>

namespace dfwi::nn {
inline namespace DFWI_NN_ABI {

bool adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg) {
  auto& p = store.flat_values();
  const auto& g = store.flat_grads();
  if (state.m.size() != p.size()) {
    state.m.assign(p.size(), Real(0));
    state.v.assign(p.size(), Real(0));
  }
  for (Real x : g) {
    if (!std::isfinite(x)) {
      ++state.skipped;
      return false;
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const Real b1 = static_cast<Real>(cfg.beta1);
  const Real b2 = static_cast<Real>(cfg.beta2);
  const Real step = static_cast<Real>(cfg.lr / c1);
  const Real inv_c2 = static_cast<Real>(1.0 / c2);
  const Real eps = static_cast<Real>(cfg.eps);
  for (std::size_t i = 0; i < p.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (Real(1) - b1) * g[i];
    state.v[i] = b2 * state.v[i] + (Real(1) - b2) * g[i] * g[i];
    p[i] -= step * state.m[i] / (std::sqrt(state.v[i] * inv_c2) + eps);
  }
  return true;
}

}  // namespace DFWI_NN_ABI
}  // namespace dfwi::nn
