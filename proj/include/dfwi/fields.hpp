#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfwi {

/// Regular 2D mesh. Fields on it are stored row-major with z outer, x inner.
struct GridSpec {
  int nx = 0;
  int nz = 0;
  double dx = 0.0;
  double dz = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(nz); }
  double width() const { return (nx - 1) * dx; }
  double depth() const { return (nz - 1) * dz; }

  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// A scalar field on a GridSpec. Base for the physical model types.
struct Field2D {
  GridSpec grid;
  std::vector<double> data;

  Field2D() = default;
  Field2D(GridSpec g, double fill = 0.0);
  Field2D(GridSpec g, std::vector<double> values);

  double& at(int iz, int ix) { return data[static_cast<std::size_t>(iz) * grid.nx + ix]; }
  double at(int iz, int ix) const { return data[static_cast<std::size_t>(iz) * grid.nx + ix]; }

  double min() const;
  double max() const;
  double mean() const;
};

/// P-wave velocity in m/s.
struct VelocityModel : Field2D {
  using Field2D::Field2D;
  void validate() const;
};

/// Bulk density in kg/m^3.
struct DensityModel : Field2D {
  using Field2D::Field2D;
  void validate() const;
};

/// Velocity mapped affinely onto [-1, 1] with fixed corpus bounds.
struct NormalizedField : Field2D {
  double v_min = 0.0;
  double v_max = 1.0;
  std::size_t clamped = 0;  // cells clamped during normalize()
};

struct AcquisitionGeometry {
  std::vector<double> source_positions;    // m, horizontal
  std::vector<double> receiver_positions;  // m, horizontal
  double source_depth = 0.0;
  double receiver_depth = 0.0;

  void validate(const GridSpec& grid) const;
};

/// Linear affine range used for both velocity and density normalization.
struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;
};

NormalizedField normalize(const VelocityModel& m, double v_min, double v_max);
VelocityModel denormalize(const NormalizedField& x);

/// Same affine map for arbitrary fields (density conditioning, metrics rescale).
Field2D to_unit_interval(const Field2D& f, ValueRange r);
Field2D to_signed_unit(const Field2D& f, ValueRange r);

/// Separable Gaussian smoothing, kernel radius ceil(3 sigma), replicated edges.
VelocityModel gaussian_smooth(const VelocityModel& m, double sigma);
Field2D gaussian_smooth(const Field2D& f, double sigma);

inline constexpr double kGardnerA = 310.0;
inline constexpr double kGardnerB = 0.25;

/// rho = a * v^b, v in m/s, rho in kg/m^3.
DensityModel gardner_density(const VelocityModel& m, double a = kGardnerA, double b = kGardnerB);

/// Normalization bounds of the density condition implied by corpus velocity bounds.
ValueRange gardner_range(ValueRange velocity, double a = kGardnerA, double b = kGardnerB);

class FieldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dfwi
