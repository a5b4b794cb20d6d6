#pragma once

#include <string>
#include <vector>

#include "dfwi/acoustic.hpp"
#include "dfwi/adjoint.hpp"
#include "dfwi/fields.hpp"

namespace dfwi {

enum class StepRule { fixed_normalized, adam_like };

struct VelocityBounds {
  double lo = 1500.0;
  double hi = 4500.0;
};

struct FwiConfig {
  int n_iters = 20;
  StepRule step_rule = StepRule::fixed_normalized;
  double lr = 30.0;  // m/s per iteration
  VelocityBounds v_bounds;
  double lambda = 0.0;
  bool tikhonov_enabled = false;
  GradientOptions gradient;

  void validate() const;
};

enum class FwiStatus { completed, stalled, diverged };

std::string to_string(FwiStatus s);

struct FwiResult {
  VelocityModel model;
  /// Objective at each iterate before its update; per_shot[i] parallels it.
  std::vector<double> misfit_trace;
  std::vector<std::vector<double>> per_shot_trace;
  FwiStatus status = FwiStatus::completed;
  int iterations = 0;
};

/// State carried across calls so repeated short runs behave like one long run
/// (used by the diffusion loop for the adam_like rule).
struct FwiState {
  std::vector<double> m1;
  std::vector<double> m2;
  long step = 0;
};

VelocityModel box_constrain(const VelocityModel& m, VelocityBounds bounds);

/// Tikhonov term sum |grad m|^2 (forward differences) and its gradient.
double tikhonov(const VelocityModel& m, Field2D* grad);

FwiResult fwi_iterate(const VelocityModel& m0, const Gathers& d_obs, const AcquisitionGeometry& geom,
                      const Wavelet& w, const SolverConfig& solver, const FwiConfig& cfg,
                      FwiState* state = nullptr);

/// CSV: iteration,J,J_shot0,J_shot1,...
void write_misfit_csv(const std::string& path, const FwiResult& r);

}  // namespace dfwi
