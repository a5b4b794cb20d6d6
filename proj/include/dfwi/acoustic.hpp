#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "dfwi/fields.hpp"

namespace dfwi {

struct Wavelet {
  int nt = 0;
  double dt = 0.0;
  double f0 = 0.0;
  double t0 = 0.0;
  std::vector<double> samples;

  double record_length() const { return nt * dt; }
};

/// Receiver recordings for one source. data is receiver-major: data[r * nt + it].
struct ShotGather {
  int nt = 0;
  double dt = 0.0;
  double source_position = 0.0;
  std::vector<double> receiver_positions;
  std::vector<double> data;

  int n_receivers() const { return static_cast<int>(receiver_positions.size()); }
  double& at(int r, int it) { return data[static_cast<std::size_t>(r) * nt + it]; }
  double at(int r, int it) const { return data[static_cast<std::size_t>(r) * nt + it]; }
};

using Gathers = std::vector<ShotGather>;

enum class SourceInjection { nearest, bilinear };

struct SolverConfig {
  int boundary_width = 20;
  double boundary_taper = 0.0053;
  int spatial_order = 4;
  double courant_safety = 1.0;
  SourceInjection injection = SourceInjection::nearest;
  /// Skip sub-stepping even when the record dt violates the CFL bound.
  bool allow_unstable = false;
  /// Worker threads for independent shots (results merged in source order).
  int jobs = 1;

  void validate() const;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ricker wavelet (1 - 2 pi^2 f0^2 tau^2) exp(-pi^2 f0^2 tau^2), tau = t - t0.
/// t0 < 0 selects the conventional delay 1/f0.
Wavelet ricker(double f0, double t0, double dt, int nt);

/// Courant constant of the leapfrog scheme for the given spatial order.
double courant_constant(int spatial_order);

double cfl_max_dt(const VelocityModel& m, const SolverConfig& cfg);

/// Evenly spaced surface acquisition. Depths default to one cell below the free surface.
AcquisitionGeometry surface_acquisition(const GridSpec& grid, int n_sources = 32, int n_receivers = 64);

std::vector<ShotGather> forward_model(const VelocityModel& m, const AcquisitionGeometry& geom,
                                      const Wavelet& w, const SolverConfig& cfg);

/// Single-shot simulation with optional wavefield energy monitor (sum p^2 per fine step).
ShotGather simulate_shot(const VelocityModel& m, const AcquisitionGeometry& geom, std::size_t shot,
                         const Wavelet& w, const SolverConfig& cfg,
                         std::vector<double>* energy_trace = nullptr);

}  // namespace dfwi
