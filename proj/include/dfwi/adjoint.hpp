#pragma once

#include <cstddef>
#include <vector>

#include "dfwi/acoustic.hpp"
#include "dfwi/fields.hpp"

namespace dfwi {

struct Misfit {
  double value = 0.0;
  std::vector<double> per_shot;
};

/// dJ/dv on the model grid.
struct Gradient : Field2D {
  using Field2D::Field2D;
};

struct GradientOptions {
  /// Drop sponge contributions and zero the top mask_top_rows rows.
  bool mask = true;
  int mask_top_rows = 2;
  /// Forward-history budget per shot; above it the adjoint recomputes
  /// segments from checkpoints.
  std::size_t memory_budget_bytes = std::size_t{512} << 20;
  /// Force checkpointing with this segment length (0 = automatic).
  int checkpoint_every = 0;
};

/// J = 1/2 sum (d_obs - d_syn)^2 over shots, traces and samples.
Misfit misfit(const Gathers& d_obs, const Gathers& d_syn);

struct GradientResult {
  Misfit misfit;
  Gradient gradient;
  Gathers synthetic;
};

/// Adjoint-state gradient of the L2 waveform misfit with respect to velocity.
GradientResult gradient(const VelocityModel& m, const Gathers& d_obs, const AcquisitionGeometry& geom,
                        const Wavelet& w, const SolverConfig& cfg, const GradientOptions& opts = {});

}  // namespace dfwi
