#include <doctest.h>

#include <cmath>
#include <random>

#include "dfwi/adjoint.hpp"
#include "dfwi/io.hpp"
#include "helpers.hpp"

using namespace dfwi;

namespace {

VelocityModel laterally_varying(int n, std::uint64_t seed) {
  auto m = testing::layered(n, n, 3, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-60.0, 60.0);
  for (auto& v : m.data) v += u(rng);
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("misfit closed forms and symmetry") {
  ShotGather a;
  a.nt = 5;
  a.dt = 1e-3;
  a.receiver_positions = {0.0, 10.0, 20.0};
  a.data.assign(15, 0.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (auto& v : a.data) v = nd(rng);
  Gathers obs{a, a};
  CHECK(misfit(obs, obs).value == 0.0);

  Gathers shifted = obs;
  for (auto& g : shifted)
    for (auto& v : g.data) v += 0.25;
  const auto m = misfit(obs, shifted);
  CHECK(m.value == doctest::Approx(0.5 * 30 * 0.0625).epsilon(1e-14));
  REQUIRE(m.per_shot.size() == 2);
  CHECK(m.per_shot[0] + m.per_shot[1] == doctest::Approx(m.value).epsilon(1e-15));

  Gathers other = obs;
  for (auto& g : other)
    for (auto& v : g.data) v = nd(rng);
  double brute = 0;
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < 15; ++i) brute += 0.5 * std::pow(obs[s].data[i] - other[s].data[i], 2);
  CHECK(misfit(obs, other).value == doctest::Approx(brute).epsilon(1e-12));
  CHECK(misfit(obs, other).value == misfit(other, obs).value);

  Gathers wrong = obs;
  wrong[1].data.pop_back();
  CHECK_THROWS_AS(misfit(obs, wrong), SolverError);
}

TEST_CASE("gradient vanishes for self-generated data") {
  const auto m = laterally_varying(16, 2);
  const auto geom = surface_acquisition(m.grid, 2, 16);
  const auto w = ricker(15.0, -1.0, 1e-3, 300);
  const auto obs = forward_model(m, geom, w, {});
  const auto g = gradient(m, obs, geom, w, {});
  CHECK(g.misfit.value == 0.0);
  for (double v : g.gradient.data) CHECK(v == 0.0);
}

TEST_CASE("adjoint gradient matches central finite differences") {
  for (std::uint64_t model_seed : {3u, 4u}) {
    const auto m = laterally_varying(16, model_seed);
    auto truth = m;
    for (std::size_t i = 0; i < truth.data.size(); ++i) truth.data[i] *= 1.0 + 0.04 * std::sin(0.7 * i);
    const auto geom = surface_acquisition(m.grid, 2, 16);
    const auto w = ricker(15.0, -1.0, 1e-3, 300);
    const auto obs = forward_model(truth, geom, w, {});
    GradientOptions exact;
    exact.mask = false;
    const auto g = gradient(m, obs, geom, w, {}, exact);
    std::mt19937_64 rng(model_seed * 11);
    std::normal_distribution<double> nd;
    for (int dir = 0; dir < 5; ++dir) {
      std::vector<double> dm(m.data.size());
      for (auto& v : dm) v = nd(rng);
      const double eps = 0.1;
      VelocityModel mp = m, mm = m;
      for (std::size_t i = 0; i < dm.size(); ++i) {
        mp.data[i] += eps * dm[i];
        mm.data[i] -= eps * dm[i];
      }
      const double fd =
          (misfit(obs, forward_model(mp, geom, w, {})).value - misfit(obs, forward_model(mm, geom, w, {})).value) /
          (2 * eps);
      CAPTURE(dir);
      CHECK(std::abs(fd - dot(g.gradient.data, dm)) <= 1e-3 * std::abs(fd));
    }
  }
}

TEST_CASE("duplicated shots double the gradient; checkpointing matches storage") {
  const auto m = laterally_varying(16, 5);
  auto truth = m;
  for (auto& v : truth.data) v *= 1.03;
  auto geom = surface_acquisition(m.grid, 1, 16);
  const auto w = ricker(15.0, -1.0, 1e-3, 250);
  const auto obs = forward_model(truth, geom, w, {});
  const auto g1 = gradient(m, obs, geom, w, {});
  auto geom2 = geom;
  geom2.source_positions.push_back(geom.source_positions[0]);
  Gathers obs2{obs[0], obs[0]};
  const auto g2 = gradient(m, obs2, geom2, w, {});
  for (std::size_t i = 0; i < g1.gradient.data.size(); ++i) CHECK(g2.gradient.data[i] == 2.0 * g1.gradient.data[i]);

  GradientOptions ck;
  ck.checkpoint_every = 37;
  const auto gc = gradient(m, obs, geom, w, {}, ck);
  const double scale = std::max(std::abs(g1.gradient.max()), std::abs(g1.gradient.min()));
  for (std::size_t i = 0; i < gc.gradient.data.size(); ++i)
    CHECK(std::abs(gc.gradient.data[i] - g1.gradient.data[i]) <= 1e-6 * scale);

  GradientOptions tiny;
  tiny.memory_budget_bytes = 1024;
  const auto gt = gradient(m, obs, geom, w, {}, tiny);
  for (std::size_t i = 0; i < gt.gradient.data.size(); ++i)
    CHECK(std::abs(gt.gradient.data[i] - g1.gradient.data[i]) <= 1e-6 * scale);
}

TEST_CASE("masked gradient is exactly zero in the top rows") {
  const auto m = laterally_varying(16, 6);
  auto truth = m;
  for (auto& v : truth.data) v *= 0.97;
  const auto geom = surface_acquisition(m.grid, 2, 16);
  const auto w = ricker(15.0, -1.0, 1e-3, 250);
  const auto g = gradient(m, forward_model(truth, geom, w, {}), geom, w, {});
  for (int iz = 0; iz < 2; ++iz)
    for (int ix = 0; ix < 16; ++ix) CHECK(g.gradient.at(iz, ix) == 0.0);
  double below = 0;
  for (int ix = 0; ix < 16; ++ix) below += std::abs(g.gradient.at(5, ix));
  CHECK(below > 0.0);
}

TEST_CASE("gradient dump uses the field format") {
  const auto dir = testing::scratch_dir("gradient");
  Field2D g({8, 9, 10, 10}, 0.5);
  write_gradient(dir + "/g.bin", g);
  const auto back = read_field(dir + "/g.bin");
  CHECK(back.kind == "gradient");
  CHECK(back.field.grid == g.grid);
  CHECK(back.field.data == g.data);
}
