#include <doctest.h>

#include <cmath>

#include "dfwi/metrics.hpp"
#include "helpers.hpp"

using namespace dfwi;

namespace {

// Independent reference: every 7x7 window evaluated directly with two-pass moments.
double reference_ssim(const Field2D& a, const Field2D& b) {
  const int w = 7;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  int count = 0;
  for (int z0 = 0; z0 + w <= a.grid.nz; ++z0) {
    for (int x0 = 0; x0 + w <= a.grid.nx; ++x0) {
      double ma = 0, mb = 0;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          ma += a.at(z0 + i, x0 + j);
          mb += b.at(z0 + i, x0 + j);
        }
      ma /= w * w;
      mb /= w * w;
      double va = 0, vb = 0, cv = 0;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          const double da = a.at(z0 + i, x0 + j) - ma, db = b.at(z0 + i, x0 + j) - mb;
          va += da * da;
          vb += db * db;
          cv += da * db;
        }
      va /= w * w - 1;
      vb /= w * w - 1;
      cv /= w * w - 1;
      total += (2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

const ValueRange kUnit{0.0, 1.0};

}  // namespace

TEST_CASE("identical fields give zero error and unit similarity") {
  const auto a = testing::random_field(20, 24, 0, 1, 1);
  CHECK(mae(a, a, kUnit) == 0.0);
  CHECK(mse(a, a, kUnit) == 0.0);
  CHECK(ssim(a, a) == 1.0);
}

TEST_CASE("constant offset closed forms") {
  const auto a = testing::random_field(16, 16, 0.2, 0.7, 2);
  Field2D b = a;
  for (auto& v : b.data) v += 0.125;
  CHECK(mae(a, b, kUnit) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(mse(a, b, kUnit) == doctest::Approx(0.125 * 0.125).epsilon(1e-12));
  // constant residual is the Jensen equality case
  CHECK(mse(a, b, kUnit) == doctest::Approx(std::pow(mae(a, b, kUnit), 2)).epsilon(1e-12));

  // rescaling through velocity bounds
  VelocityModel v1({8, 8, 10, 10}, 2000.0), v2({8, 8, 10, 10}, 2300.0);
  CHECK(mae(v1, v2, {1500, 4500}) == doctest::Approx(0.1));
  CHECK(mse(v1, v2, {1500, 4500}) == doctest::Approx(0.01));
}

TEST_CASE("constant fields follow the zero-variance SSIM form") {
  const double p = 0.3, q = 0.8, c1 = 1e-4;
  Field2D a({10, 10, 10, 10}, p), b({10, 10, 10, 10}, q);
  CHECK(ssim(a, b) == doctest::Approx((2 * p * q + c1) / (p * p + q * q + c1)).epsilon(1e-12));
}

TEST_CASE("SSIM agrees with an independent implementation") {
  for (int k = 0; k < 5; ++k) {
    const auto a = testing::random_field(16 + k, 20 - k, 0, 1, 10 + k);
    Field2D b = a;
    const auto n = testing::random_field(16 + k, 20 - k, -0.2, 0.2, 50 + k);
    for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] += n.data[i];
    bool fallback = true;
    CHECK(std::abs(ssim(a, b, &fallback) - reference_ssim(a, b)) <= 1e-6);
    CHECK_FALSE(fallback);
  }
}

TEST_CASE("metrics are symmetric and SSIM is maximal at identity") {
  const auto a = testing::random_field(14, 14, 0, 1, 3), b = testing::random_field(14, 14, 0, 1, 4);
  CHECK(mae(a, b, kUnit) == mae(b, a, kUnit));
  CHECK(mse(a, b, kUnit) == mse(b, a, kUnit));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  for (int k = 0; k < 10; ++k) {
    Field2D c = a;
    const auto n = testing::random_field(14, 14, -0.01, 0.01, 100 + k);
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += n.data[i];
    CHECK(ssim(a, c) < 1.0);
  }
  const double s = ssim(a, b);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
}

TEST_CASE("small fields use global statistics") {
  const auto a = testing::random_field(5, 6, 0, 1, 7);
  bool fallback = false;
  CHECK(ssim(a, a, &fallback) == doctest::Approx(1.0));
  CHECK(fallback);
}

TEST_CASE("shape mismatch is rejected") {
  Field2D a({8, 8, 10, 10}, 0.5), b({9, 8, 10, 10}, 0.5);
  CHECK_THROWS_AS(mae(a, b, kUnit), FieldError);
  CHECK_THROWS_AS(ssim(a, b), FieldError);
}

TEST_CASE("report CSV round trip") {
  std::vector<EvalReport> rows{{"clean", "fwi", 0.1, 0.02, 0.75}, {"noisy", "diffwi_cond", 0.05, 0.01, 0.9}};
  const auto text = report_csv(rows);
  CHECK(text.rfind("condition,method,mae,mse,ssim\n", 0) == 0);
  const auto back = parse_report_csv(text);
  REQUIRE(back.size() == 2);
  CHECK(back[1].method == "diffwi_cond");
  CHECK(back[0].ssim == doctest::Approx(0.75));
}
