#pragma once

#include <cstdint>
#include <vector>

#include "dfwi/nn/graph.hpp"

namespace dfwi::nn {
inline namespace DFWI_NN_ABI {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Real> m;
  std::vector<Real> v;
  std::int64_t step = 0;
  std::int64_t skipped = 0;  // steps rejected for non-finite gradients
};

/// Bias-corrected Adam update of every parameter from store.flat_grads().
/// Returns false (and leaves parameters untouched) when a gradient is non-finite.
bool adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg);

}  // namespace DFWI_NN_ABI
}  // namespace dfwi::nn
