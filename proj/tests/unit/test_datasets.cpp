#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

#include "dfwi/datasets.hpp"
#include "dfwi/io.hpp"
#include "helpers.hpp"

using namespace dfwi;

namespace {

const std::string kFixtures = DFWI_FIXTURE_DIR;

ShotGather sine_gather(double f, double dt, int nt, int receivers = 1, double phase = 0.0) {
  ShotGather g;
  g.nt = nt;
  g.dt = dt;
  for (int r = 0; r < receivers; ++r) g.receiver_positions.push_back(10.0 * r);
  g.data.resize(static_cast<std::size_t>(nt) * receivers);
  for (int r = 0; r < receivers; ++r)
    for (int i = 0; i < nt; ++i) g.at(r, i) = std::sin(2 * std::numbers::pi * f * i * dt + phase + r);
  return g;
}

// Amplitude of the f-Hz component over the central half of the trace.
double amplitude_at(const std::vector<double>& x, double f, double dt) {
  const std::size_t a = x.size() / 4, b = 3 * x.size() / 4;
  std::complex<double> acc = 0;
  for (std::size_t i = a; i < b; ++i) acc += x[i] * std::polar(1.0, -2 * std::numbers::pi * f * i * dt);
  return 2.0 * std::abs(acc) / static_cast<double>(b - a);
}

}  // namespace

TEST_CASE("family models honour their construction rules") {
  for (const auto& spec : default_family_specs()) {
    CAPTURE(spec.name());
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto m = synth_model(spec, seed);
      CHECK(m.grid.nx == 64);
      CHECK(m.grid.nz == 64);
      CHECK(m.min() >= spec.v_lo);
      CHECK(m.max() <= spec.v_hi);
      if (spec.family == Family::flat_vel) {
        for (int iz = 0; iz < 64; ++iz)
          for (int ix = 1; ix < 64; ++ix) REQUIRE(m.at(iz, ix) == m.at(iz, 0));
      }
    }
    CHECK(synth_model(spec, 9).data == synth_model(spec, 9).data);
    const auto a = synth_model(spec, 9), b = synth_model(spec, 10);
    double linf = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) linf = std::max(linf, std::abs(a.data[i] - b.data[i]));
    CHECK(linf > 0.0);
  }
}

TEST_CASE("B variants are more complex than A variants") {
  for (auto fam : {"FlatVel", "CurveVel", "FlatFault", "CurveFault"}) {
    const auto a = family_spec(std::string(fam) + "-A"), b = family_spec(std::string(fam) + "-B");
    CHECK(b.layers_max > a.layers_max);
    CHECK(b.min_contrast > a.min_contrast);
  }
  CHECK_THROWS_AS(family_spec("Marmousi"), FieldError);
}

TEST_CASE("velocity generally increases with depth") {
  int increasing = 0, total = 0;
  for (const auto& spec : default_family_specs()) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto m = synth_model(spec, s);
      double top = 0, bottom = 0;
      for (int ix = 0; ix < 64; ++ix) {
        top += m.at(2, ix);
        bottom += m.at(61, ix);
      }
      increasing += bottom > top;
      ++total;
    }
  }
  CHECK(increasing >= 0.8 * total);
}

TEST_CASE("held-out seeds never coincide with corpus seeds") {
  const auto spec = family_spec("CurveVel-A");
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 200; ++j) REQUIRE(heldout_seed(7, spec, i) != sample_seed(7, spec, j));
}

TEST_CASE("corpus counts, bounds and coverage") {
  const auto c = build_corpus(default_family_specs(), 12, 7);
  CHECK(c.entries.size() == 96);
  std::vector<int> hist(30, 0);
  for (const auto& e : c.entries) {
    CHECK(e.velocity.min() >= c.velocity_bounds.lo);
    CHECK(e.velocity.max() <= c.velocity_bounds.hi);
    CHECK(e.density.min() >= c.density_bounds.lo - 1e-9);
    CHECK(e.density.max() <= c.density_bounds.hi + 1e-9);
    for (double v : e.velocity.data) {
      const int bin = std::min(29, static_cast<int>((v - 1500.0) / 100.0));
      ++hist[bin];
    }
  }
  const auto first = std::find_if(hist.begin(), hist.end(), [](int h) { return h > 0; }) - hist.begin();
  const auto last = hist.rend() - std::find_if(hist.rbegin(), hist.rend(), [](int h) { return h > 0; });
  CHECK(static_cast<double>(last - first) / 30.0 >= 0.9);
}

TEST_CASE("corpus directory round trip and reproducibility") {
  const auto dir = testing::scratch_dir("corpus");
  const auto c = build_corpus({family_spec("FlatVel-A"), family_spec("CurveFault-B")}, 3, 5);
  write_corpus(dir + "/a", c);
  write_corpus(dir + "/b", build_corpus({family_spec("FlatVel-A"), family_spec("CurveFault-B")}, 3, 5));
  CHECK(read_text(dir + "/a/manifest.json") == read_text(dir + "/b/manifest.json"));
  CHECK(std::filesystem::exists(dir + "/a/FlatVel-A/0002_vel.bin"));
  CHECK(std::filesystem::exists(dir + "/a/CurveFault-B/0000_rho.bin"));
  const auto back = read_corpus(dir + "/a");
  REQUIRE(back.entries.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t k = 0; k < c.entries[i].velocity.data.size(); ++k)
      REQUIRE(back.entries[i].velocity.data[k] == static_cast<double>(static_cast<float>(c.entries[i].velocity.data[k])));
  }
  CHECK(bounds_checksum(back.velocity_bounds) == bounds_checksum(c.velocity_bounds));
  CHECK_THROWS_AS(read_corpus(dir + "/missing"), IoError);
}

TEST_CASE("native field files round trip bit-identically") {
  const auto dir = testing::scratch_dir("native");
  auto f = testing::random_velocity(12, 10, 1500, 4500, 3);
  for (auto& v : f.data) v = static_cast<float>(v);
  write_field(dir + "/m.bin", f, "velocity");
  const auto back = load_field_file(dir + "/m.bin");
  CHECK(back.grid == f.grid);
  CHECK(back.data == f.data);
}

TEST_CASE("array container fixture written by an independent tool") {
  const auto m = load_field_file(kFixtures + "/known_64x64.npy");
  CHECK(m.grid.nz == 64);
  CHECK(m.grid.nx == 64);
  CHECK(m.grid.dx == 10.0);
  CHECK(m.at(0, 0) == 1501.25);
  CHECK(m.at(0, 63) == 2222.5);
  CHECK(m.at(63, 0) == 3333.75);
  CHECK(m.at(63, 63) == 4444.0);
  CHECK(m.at(1, 2) == 1500.0 + 0.5 * 66);

  const auto stack = load_field_stack(kFixtures + "/stack_3x16x16.npy", 4.0);
  REQUIRE(stack.size() == 3);
  CHECK(stack[2].at(5, 5) == 1700.0);
  CHECK(stack[0].grid.dx == 4.0);

  const auto dir = testing::scratch_dir("npy");
  write_array_container(dir + "/w.npy", m);
  CHECK(load_field_file(dir + "/w.npy").data == m.data);
}

TEST_CASE("array container errors are precise") {
  auto message = [](const std::string& path) {
    try {
      load_field_file(path);
    } catch (const IoError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(kFixtures + "/float64_8x8.npy").find("unsupported dtype '<f8'") != std::string::npos);
  CHECK(message(kFixtures + "/fortran_8x8.npy").find("Fortran") != std::string::npos);
  const auto dir = testing::scratch_dir("badmagic");
  write_text(dir + "/junk.npy", "NOTNUMPY-data-data-data");
  CHECK(message(dir + "/junk.npy").find("bad magic") != std::string::npos);
}

TEST_CASE("additive noise hits the requested SNR") {
  auto g = sine_gather(12.0, 1e-3, 800, 16);
  const auto n1 = add_gaussian_noise(g, 10.0, 42);
  const auto n2 = add_gaussian_noise(g, 10.0, 42);
  CHECK(n1.data == n2.data);
  CHECK(add_gaussian_noise(g, 10.0, 42, false).data == g.data);
  double ps = 0, pn = 0;
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    ps += g.data[i] * g.data[i];
    pn += std::pow(n1.data[i] - g.data[i], 2);
  }
  CHECK(std::abs(10 * std::log10(ps / pn) - 10.0) <= 0.5);
  ShotGather silent = g;
  std::fill(silent.data.begin(), silent.data.end(), 0.0);
  CHECK_THROWS_AS(add_gaussian_noise(silent, 10.0, 1), FieldError);
  const Gathers both{g, g};
  const auto nb = add_gaussian_noise(both, 10.0, 3);
  CHECK(nb[0].data != nb[1].data);
}

TEST_CASE("high-pass removes DC and low frequencies, keeps the band") {
  const double dt = 1e-3;
  ShotGather dc = sine_gather(0.0, dt, 2000);
  std::fill(dc.data.begin(), dc.data.end(), 1.0);
  const auto f = highpass(dc, 3.0);
  for (int i = 0; i < 2000; ++i) CHECK(std::abs(f.data[i]) < 1e-6);

  const auto low = highpass(sine_gather(1.0, dt, 8000), 3.0);
  CHECK(20 * std::log10(amplitude_at(low.data, 1.0, dt)) <= -40.0);
  const auto band = highpass(sine_gather(15.0, dt, 4000), 3.0);
  CHECK(std::abs(20 * std::log10(amplitude_at(band.data, 15.0, dt))) <= 1.0);
  CHECK_THROWS_AS(highpass(dc, 600.0), FieldError);
}

TEST_CASE("high-pass is zero-phase even when applied twice") {
  ShotGather g;
  g.nt = 1500;
  g.dt = 1e-3;
  g.receiver_positions = {0.0};
  const auto w = ricker(15.0, 0.75, 1e-3, 1500);
  g.data = w.samples;
  const auto twice = highpass(highpass(g, 3.0), 3.0);
  int best = 0;
  double peak = -1e300;
  for (int lag = -50; lag <= 50; ++lag) {
    double c = 0;
    for (int i = 0; i < g.nt; ++i)
      if (i + lag >= 0 && i + lag < g.nt) c += g.data[i] * twice.data[i + lag];
    if (c > peak) {
      peak = c;
      best = lag;
    }
  }
  CHECK(best == 0);
}

TEST_CASE("shot selection snaps to cells and keeps receivers") {
  const GridSpec grid{64, 64, 10, 10};
  const auto geom = surface_acquisition(grid);
  const auto sel = select_shots(geom, grid, {140.0, 420.0, 600.0});
  REQUIRE(sel.geometry.source_positions.size() == 3);
  CHECK(sel.geometry.source_positions == std::vector<double>{140.0, 420.0, 600.0});
  CHECK(sel.geometry.receiver_positions == geom.receiver_positions);

  const auto full = select_shots(geom, grid, geom.source_positions);
  CHECK(full.geometry.source_positions.size() == geom.source_positions.size());

  const auto odd = select_shots(geom, grid, {143.0});
  CHECK(odd.requested[0] == 143.0);
  CHECK(odd.snapped[0] == 140.0);
  CHECK_THROWS_AS(select_shots(geom, grid, {}), FieldError);
  CHECK_THROWS_AS(select_shots(geom, grid, {900.0}), FieldError);
}

TEST_CASE("crop and decimate") {
  const auto m = testing::random_velocity(30, 40, 1500, 5500, 8);
  const auto id = crop_resample(m, 0, 0, 30, 40, 1);
  CHECK(id.data == m.data);
  const auto half = crop_resample(m, 0, 0, 29, 39, 2);
  CHECK(half.grid.nz == 15);
  CHECK(half.grid.nx == 20);
  CHECK(half.grid.dx == 20.0);
  CHECK(half.min() >= 1500.0);
  CHECK(half.max() <= 5500.0);
  CHECK_THROWS_AS(crop_resample(m, 10, 0, 30, 40, 1), FieldError);
}
