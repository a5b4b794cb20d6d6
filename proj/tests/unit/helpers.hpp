#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "dfwi/fields.hpp"

namespace testing {

inline dfwi::Field2D random_field(int nz, int nx, double lo, double hi, std::uint64_t seed, double d = 10.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  dfwi::Field2D f({nx, nz, d, d});
  for (auto& v : f.data) v = u(rng);
  return f;
}

inline dfwi::VelocityModel random_velocity(int nz, int nx, double lo, double hi, std::uint64_t seed) {
  auto f = random_field(nz, nx, lo, hi, seed);
  return dfwi::VelocityModel(f.grid, f.data);
}

/// Horizontally layered model with `layers` random velocities increasing downwards.
inline dfwi::VelocityModel layered(int nz, int nx, int layers, std::uint64_t seed, double d = 10.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  dfwi::VelocityModel m({nx, nz, d, d}, 0.0);
  for (int iz = 0; iz < nz; ++iz) {
    const int layer = iz * layers / nz;
    const double v = 1800.0 + 500.0 * layer + 200.0 * u(rng) * (iz % (nz / layers) == 0);
    for (int ix = 0; ix < nx; ++ix) m.at(iz, ix) = iz > 0 && iz % (nz / layers) != 0 ? m.at(iz - 1, ix) : v;
  }
  return m;
}

/// Fresh scratch directory below the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("dfwi_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace testing
