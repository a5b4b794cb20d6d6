#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfwi/ddpm.hpp"
#include "dfwi/fwi.hpp"
#include "dfwi/nn/denoiser.hpp"

namespace dfwi {

enum class ConditionSource { true_density, gardner_of_initial, gardner_of_current };

std::string to_string(ConditionSource c);
ConditionSource condition_source_from_string(const std::string& s);

struct DiffwiConfig {
  int t_start = 100;
  int fwi_iters_per_step = 10;  // K
  int stride = 1;               // reverse steps per outer loop
  ConditionSource condition_source = ConditionSource::true_density;
  std::uint64_t seed = 0;
  /// Models larger than the network crop are corrected tile-wise.
  bool allow_tiling = true;
  int tile_overlap = 8;
  /// Otherwise mismatched grids are bilinearly resampled to the crop and back.
  bool allow_resample = false;
  bool keep_snapshots = false;

  void validate(const NoiseSchedule& s) const;
};

/// Trained network plus everything needed to use it consistently.
struct DiffusionPrior {
  nn::Denoiser* net = nullptr;
  NoiseSchedule schedule;
  ValueRange velocity_bounds;
  bool conditional = true;
};

/// Normalized density condition for a velocity model (zeros when unconditional).
Field2D condition_field(const VelocityModel& source, const DiffusionPrior& prior);

/// Reference members of the prior used by the data-driven t_start rule.
struct PriorReference {
  std::vector<Field2D> members;  // normalized to [-1, 1]
  ValueRange velocity_bounds;
};

/// Without a reference: T / 5. With one: the smallest t whose noise level
/// sqrt(1 - abar_t) reaches the RMS distance (normalized units, unclamped)
/// from m0 to its nearest reference member.
int choose_t_start(const VelocityModel& m0, const PriorReference* ref, const NoiseSchedule& s);

struct DiffwiStep {
  int outer_step = 0;
  int t = 0;       // diffusion level the iterate was re-noised to
  double J = 0.0;  // misfit before the last FWI update of this step (NaN when K = 0)
  double mae = 0.0, mse = 0.0, ssim = 0.0;  // NaN without truth
};

struct DiffwiResult {
  VelocityModel model;
  std::vector<DiffwiStep> diagnostics;
  std::vector<double> misfit_trace;  // every FWI evaluation in order
  std::vector<VelocityModel> snapshots;
  FwiStatus fwi_status = FwiStatus::completed;
};

/// Re-noise the model to level t with eps(seed, t) and run the reverse chain
/// to level t_to. Models that do not match the crop are tiled or resampled.
VelocityModel diffusion_correct(const VelocityModel& m, int t, int t_to, const Field2D& cond,
                                const DiffusionPrior& prior, const DiffwiConfig& cfg);

/// Interleaves K FWI iterations with a diffusion correction at each level
/// t_start, t_start - stride, ... . With t_start = 0 it is plain FWI with K
/// iterations. With K = 0 the chain is never re-noised after the first
/// correction, which makes it a warm-started conditional sample.
DiffwiResult diffusion_fwi(const VelocityModel& m0, const Gathers& d_obs, const AcquisitionGeometry& geom,
                           const Wavelet& w, const SolverConfig& solver, const FwiConfig& fwi,
                           const DiffusionPrior& prior, const DiffwiConfig& cfg,
                           const VelocityModel* truth = nullptr, const DensityModel* true_density = nullptr);

/// Sample from the prior starting at m0 noised to t_start (used as the K = 0 reference).
VelocityModel warm_started_sample(const VelocityModel& m0, const Field2D& cond, const DiffusionPrior& prior,
                                  int t_start, std::uint64_t seed, VelocityBounds bounds);

/// CSV: outer_step,t,J,mae,mse,ssim
void write_diagnostics_csv(const std::string& path, const DiffwiResult& r);

}  // namespace dfwi
