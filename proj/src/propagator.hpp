#pragma once

// Leapfrog pressure propagator shared by forward modeling and the adjoint.
//
// State recurrence on the padded grid (sponge left/right/bottom, zero ghost
// rows above the surface):
//   p[j+1] = G * (2 p[j] - G * p[j-1] + W * L p[j]) + G * F[j]
// with W = dt^2 v^2, G the sponge taper and F the injected source term.
// L is the symmetric finite-difference Laplacian with zero halo, so the
// transposed step needed by the adjoint reuses the same stencil.

#include <cstddef>
#include <vector>

#include "dfwi/acoustic.hpp"

namespace dfwi::detail {

struct InjectionPoint {
  std::size_t index;  // flat padded-array index
  double weight;
};

class Propagator {
 public:
  Propagator(const VelocityModel& m, const AcquisitionGeometry& geom, const Wavelet& w,
             const SolverConfig& cfg);

  int halo() const { return halo_; }
  int padded_nx() const { return nxp_; }
  int padded_nz() const { return nzp_; }
  int stride() const { return stride_; }
  std::size_t array_size() const { return array_size_; }
  int substeps() const { return substeps_; }
  double dt() const { return dt_; }
  int nt_record() const { return nt_record_; }
  int nt_fine() const { return (nt_record_ - 1) * substeps_ + 1; }
  int boundary_width() const { return bw_; }

  std::size_t index(int izp, int ixp) const {
    return static_cast<std::size_t>(izp + halo_) * stride_ + (ixp + halo_);
  }
  std::size_t model_index(int iz, int ix) const { return index(iz, ix + bw_); }

  const std::vector<double>& taper() const { return g_; }
  const std::vector<double>& w() const { return w_; }
  const std::vector<double>& padded_velocity() const { return v_; }

  /// out = L p over physical padded cells (halo of out untouched).
  void laplacian(const double* p, double* out) const;

  /// Advances (prev, cur) -> (cur, next) writing next into prev.
  /// lap receives L cur when non-null.
  void step(double* prev, const double* cur, double* lap_scratch) const;

  /// Transposed step: lam_far <- A^T lam_near - B lam_far (in place).
  void adjoint_step(double* lam_far, const double* lam_near, double* scratch, double* lap) const;

  std::vector<InjectionPoint> source_points(std::size_t shot) const;
  std::vector<std::size_t> receiver_cells() const;

  /// Source amplitude per fine step, already scaled by dt^2 / (dx dz).
  const std::vector<double>& source_signal() const { return signal_; }

  double model_energy(const double* p) const;

  /// Map padded cell -> model cell it replicates (edge replication).
  int model_row_of(int izp) const;
  int model_col_of(int ixp) const;

 private:
  GridSpec grid_;
  int bw_;
  int halo_;
  int nxp_;
  int nzp_;
  int stride_;
  std::size_t array_size_;
  int substeps_;
  double dt_;
  int nt_record_;
  int order_;
  const AcquisitionGeometry* geom_;
  SourceInjection injection_;
  std::vector<double> v_;
  std::vector<double> w_;
  std::vector<double> g_;
  std::vector<double> g2_;
  std::vector<double> signal_;
  double cx_[3];
  double cz_[3];
};

void check_finite_wavefield(const double* p, std::size_t n, int step);

}  // namespace dfwi::detail
