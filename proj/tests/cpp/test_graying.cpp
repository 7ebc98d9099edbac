#include <doctest.h>

#include <cmath>

#include "tokengray/dct.hpp"
#include "tokengray/graying.hpp"
#include "tokengray/rng.hpp"
#include "tokengray/svd.hpp"

using namespace tg;

TEST_CASE("svd graying follows the exponent law on ln kappa") {
  for (double eps : {0.5, 0.7, 0.95, 1.0}) {
    Matrix x = random_gaussian(16, 8, {300, static_cast<std::uint64_t>(eps * 100)});
    Matrix y = svd_token_gray(x, eps);
    CHECK(ln_cond(y) == doctest::Approx(eps * ln_cond(x)).epsilon(1e-9));
    CHECK(singular_values(y)[0] == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("svd graying with rescale keeps sigma_max; eps=1 recovers X") {
  Matrix x = random_gaussian(12, 6, {301, 0});
  const double smax = singular_values(x)[0];
  Matrix y = svd_token_gray(x, 0.7, /*rescale=*/true);
  CHECK(singular_values(y)[0] == doctest::Approx(smax).epsilon(1e-10));
  CHECK(max_abs_diff(svd_token_gray(x, 1.0, true), x) < 1e-10);
}

TEST_CASE("svd graying rejects a bad epsilon") {
  Matrix x = random_gaussian(4, 4, {302, 0});
  CHECK_THROWS_AS(svd_token_gray(x, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(svd_token_gray(x, 1.5), std::invalid_argument);
}

TEST_CASE("dct graying at eps=1 is the identity") {
  Matrix x = random_gaussian(16, 16, {303, 0});
  CHECK(max_abs_diff(dct_token_gray(x, 1.0), x) < 1e-12);
}

TEST_CASE("dct graying preserves signs and the peak magnitude in frequency space") {
  Matrix x = random_gaussian(12, 12, {304, 0});
  Matrix before = dct2(x);
  Matrix after = dct2(dct_token_gray(x, 0.8));
  double peak_before = before.max_abs(), peak_after = after.max_abs();
  CHECK(peak_after == doctest::Approx(peak_before).epsilon(1e-10));
  for (int i = 0; i < before.rows(); ++i)
    for (int j = 0; j < before.cols(); ++j) {
      if (std::fabs(before(i, j)) < 1e-12) continue;
      CHECK(before(i, j) * after(i, j) >= 0.0);       // sign preserved
      CHECK(std::fabs(after(i, j)) + 1e-12 >= std::fabs(before(i, j)));  // amplified
    }
}

TEST_CASE("dct graying lowers kappa on a low-frequency-dominated matrix") {
  // Smooth ramp plus small noise: energy concentrated in low frequencies,
  // the regime the transform is designed for.
  Rng rng({305, 0});
  Matrix x(16, 16);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) x(i, j) = 1.0 + 0.1 * i + 0.07 * j + 0.01 * rng.gaussian();
  CHECK(ln_cond(dct_token_gray(x, 0.7)) < ln_cond(x));
}

TEST_CASE("gray batch applies per sample and validates shapes") {
  GrayingConfig cfg{GrayingMethod::SvdTG, 0.9, false};
  std::vector<Matrix> batch{random_gaussian(6, 4, {306, 0}), random_gaussian(6, 4, {306, 1})};
  auto out = gray_batch(batch, cfg);
  REQUIRE(out.size() == 2);
  CHECK(max_abs_diff(out[1], svd_token_gray(batch[1], 0.9)) == 0.0);
  batch.push_back(random_gaussian(5, 4, {306, 2}));
  CHECK_THROWS_AS(gray_batch(batch, cfg), std::invalid_argument);
}

TEST_CASE("method None is the identity") {
  Matrix x = random_gaussian(5, 5, {307, 0});
  CHECK(max_abs_diff(apply_graying(x, GrayingConfig{}), x) == 0.0);
}
