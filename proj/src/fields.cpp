#include "dfwi/fields.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dfwi {

namespace {

void require_finite(const Field2D& f, const char* what) {
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    if (!std::isfinite(f.data[i])) {
      std::ostringstream os;
      os << what << ": non-finite value at cell " << i << " (iz=" << i / f.grid.nx
         << ", ix=" << i % f.grid.nx << ")";
      throw FieldError(os.str());
    }
  }
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double s = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= s;
  return k;
}

}  // namespace

void GridSpec::validate() const {
  if (nx < 8 || nz < 8) {
    throw FieldError("grid must be at least 8x8, got " + std::to_string(nx) + "x" + std::to_string(nz));
  }
  if (!(dx > 0.0) || !(dz > 0.0)) throw FieldError("grid spacing must be positive");
}

Field2D::Field2D(GridSpec g, double fill) : grid(g), data(g.size(), fill) {}

Field2D::Field2D(GridSpec g, std::vector<double> values) : grid(g), data(std::move(values)) {
  if (data.size() != grid.size()) {
    throw FieldError("field has " + std::to_string(data.size()) + " values, grid expects " +
                     std::to_string(grid.size()));
  }
}

double Field2D::min() const { return *std::min_element(data.begin(), data.end()); }
double Field2D::max() const { return *std::max_element(data.begin(), data.end()); }
double Field2D::mean() const {
  return std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
}

void VelocityModel::validate() const {
  require_finite(*this, "velocity");
  for (double v : data) {
    if (!(v > 0.0)) throw FieldError("velocity must be strictly positive");
  }
}

void DensityModel::validate() const {
  require_finite(*this, "density");
  for (double v : data) {
    if (!(v > 0.0)) throw FieldError("density must be strictly positive");
  }
}

void AcquisitionGeometry::validate(const GridSpec& grid) const {
  if (source_positions.empty()) throw FieldError("acquisition has no sources");
  if (receiver_positions.empty()) throw FieldError("acquisition has no receivers");
  const double extent = grid.width();
  auto check = [&](double x, const char* what) {
    if (!(x >= 0.0 && x <= extent)) {
      std::ostringstream os;
      os << what << " at " << x << " m outside [0, " << extent << "] m";
      throw FieldError(os.str());
    }
  };
  for (double x : source_positions) check(x, "source");
  for (double x : receiver_positions) check(x, "receiver");
  if (source_depth < 0.0 || receiver_depth < 0.0) throw FieldError("negative acquisition depth");
  if (source_depth > grid.depth() || receiver_depth > grid.depth()) {
    throw FieldError("acquisition depth below model bottom");
  }
}

NormalizedField normalize(const VelocityModel& m, double v_min, double v_max) {
  if (!(v_min < v_max)) throw FieldError("normalize: v_min must be < v_max");
  require_finite(m, "normalize");
  NormalizedField x;
  x.grid = m.grid;
  x.v_min = v_min;
  x.v_max = v_max;
  x.data.resize(m.data.size());
  const double scale = 2.0 / (v_max - v_min);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    double y = (m.data[i] - v_min) * scale - 1.0;
    if (y < -1.0 || y > 1.0) {
      ++x.clamped;
      y = std::clamp(y, -1.0, 1.0);
    }
    x.data[i] = y;
  }
  return x;
}

VelocityModel denormalize(const NormalizedField& x) {
  require_finite(x, "denormalize");
  VelocityModel m(x.grid);
  const double half = 0.5 * (x.v_max - x.v_min);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    m.data[i] = std::clamp((x.data[i] + 1.0) * half + x.v_min, x.v_min, x.v_max);
  }
  return m;
}

Field2D to_unit_interval(const Field2D& f, ValueRange r) {
  Field2D out(f.grid);
  const double inv = 1.0 / (r.hi - r.lo);
  for (std::size_t i = 0; i < f.data.size(); ++i) out.data[i] = (f.data[i] - r.lo) * inv;
  return out;
}

Field2D to_signed_unit(const Field2D& f, ValueRange r) {
  Field2D out(f.grid);
  const double scale = 2.0 / (r.hi - r.lo);
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    out.data[i] = std::clamp((f.data[i] - r.lo) * scale - 1.0, -1.0, 1.0);
  }
  return out;
}

Field2D gaussian_smooth(const Field2D& f, double sigma) {
  if (!(sigma >= 0.0)) throw FieldError("gaussian_smooth: sigma must be >= 0");
  if (sigma == 0.0) return f;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int nx = f.grid.nx;
  const int nz = f.grid.nz;

  Field2D tmp(f.grid);
  for (int iz = 0; iz < nz; ++iz) {
    for (int ix = 0; ix < nx; ++ix) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j) {
        acc += k[j + radius] * f.at(iz, std::clamp(ix + j, 0, nx - 1));
      }
      tmp.at(iz, ix) = acc;
    }
  }
  Field2D out(f.grid);
  for (int iz = 0; iz < nz; ++iz) {
    for (int ix = 0; ix < nx; ++ix) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j) {
        acc += k[j + radius] * tmp.at(std::clamp(iz + j, 0, nz - 1), ix);
      }
      out.at(iz, ix) = acc;
    }
  }
  return out;
}

VelocityModel gaussian_smooth(const VelocityModel& m, double sigma) {
  Field2D s = gaussian_smooth(static_cast<const Field2D&>(m), sigma);
  return VelocityModel(s.grid, std::move(s.data));
}

DensityModel gardner_density(const VelocityModel& m, double a, double b) {
  DensityModel rho(m.grid);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const double v = m.data[i];
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw FieldError("gardner_density: non-positive velocity at cell " + std::to_string(i));
    }
    rho.data[i] = a * std::pow(v, b);
  }
  return rho;
}

ValueRange gardner_range(ValueRange velocity, double a, double b) {
  const double lo = a * std::pow(velocity.lo, b);
  const double hi = a * std::pow(velocity.hi, b);
  return {std::min(lo, hi), std::max(lo, hi)};
}

}  // namespace dfwi
