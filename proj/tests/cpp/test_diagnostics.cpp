#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tokengray/diagnostics.hpp"
#include "tokengray/rng.hpp"
#include "tokengray/svd.hpp"

using namespace tg;

namespace {

Image gaussian_image(int h, int w, RngStream stream) {
  Rng rng(stream);
  Image img;
  img.h = h;
  img.w = w;
  img.c = 1;
  img.pix.resize(static_cast<std::size_t>(h) * w);
  for (double& v : img.pix) v = rng.gaussian();
  return img;
}

}  // namespace

TEST_CASE("prop1 bound holds on every full-rank trial") {
  BoundTrialStats s = verify_prop1(16, 8, 50, {700, 0});
  CHECK(s.excluded == 0);
  CHECK(s.satisfaction_fraction == 1.0);
  CHECK(s.median_ln_ratio < 0.0);
  for (const BoundTrial& t : s.trials) CHECK(t.c >= 1.0);
}

TEST_CASE("prop2 in PSD mode always favors the skip and records appendix bounds") {
  BoundTrialStats s = verify_prop2(16, 8, 50, {701, 0}, /*psd_mode=*/true);
  CHECK(s.satisfaction_fraction == 1.0);
  CHECK(s.median_ln_ratio < 0.0);
  for (const BoundTrial& t : s.trials) {
    if (t.excluded) continue;
    CHECK(t.bound_no_skip > 0.0);
    CHECK(t.bound_skip > 0.0);
    CHECK(t.bound_skip < t.bound_no_skip);  // Eq. 20 improves on Eq. 19
  }
}

TEST_CASE("prop2 raw mode is weaker than PSD mode") {
  BoundTrialStats psd = verify_prop2(16, 8, 100, {702, 0}, true);
  BoundTrialStats raw = verify_prop2(16, 8, 100, {702, 0}, false);
  CHECK(raw.satisfaction_fraction <= psd.satisfaction_fraction);
}

TEST_CASE("ffn bound statistics are well formed") {
  BoundTrialStats s = verify_ffn_bound(16, 8, 50, {703, 0});
  CHECK(s.requested_trials == 50);
  CHECK(s.trials.size() == 50);
  CHECK(s.satisfaction_fraction >= 0.0);
  CHECK(s.satisfaction_fraction <= 1.0);
  CHECK(std::isfinite(s.median_ln_ratio));
}

TEST_CASE("convmixer bound holds for the unrolled operator") {
  BoundTrialStats s = verify_convmixer_bound(4, 6, 50, {704, 0});
  CHECK(s.satisfaction_fraction == 1.0);
}

TEST_CASE("layer condition profile has one record per layer and tracks skips") {
  VitSpec spec;
  spec.dim = 16;
  spec.heads = 2;
  spec.layers = 3;
  spec.image_h = spec.image_w = 16;
  spec.patch = 4;
  ModelParams model = make_vit(spec, {705, 0});
  std::vector<Image> batch{gaussian_image(16, 16, {705, 1}), gaussian_image(16, 16, {705, 2})};
  ConditionReport r = layer_condition_profile(model, batch, GrayingConfig{});
  REQUIRE(r.layers.size() == 3);
  CHECK(r.batch_size == 2);
  for (const auto& rec : r.layers) {
    CHECK(std::isfinite(rec.ln_k_sa_skip));
    CHECK(rec.ln_k_sa_skip > 0.0);
  }
  ConditionReport post =
      layer_condition_profile(model, batch, GrayingConfig{}, TapPoint::PostNorm);
  CHECK(post.layers[0].ln_k_sa_skip != doctest::Approx(r.layers[0].ln_k_sa_skip));
}

TEST_CASE("sab jacobian spectrum is positive and descending") {
  VitSpec spec;
  spec.dim = 8;
  spec.heads = 2;
  spec.layers = 1;
  spec.image_h = spec.image_w = 8;
  spec.patch = 4;
  ModelParams model = make_vit(spec, {706, 0});
  Matrix x = random_gaussian(4, 8, {706, 1});
  std::vector<double> s = sab_jacobian_spectrum(model, 0, x);
  REQUIRE(s.size() == 32);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i - 1] >= s[i]);
  CHECK(s.back() >= 0.0);
  CHECK_THROWS_AS(sab_jacobian_spectrum(model, 5, x), std::invalid_argument);
}

TEST_CASE("bound report files are written and parseable") {
  BoundTrialStats s = verify_prop1(8, 4, 5, {707, 0});
  const std::string csv = (std::filesystem::temp_directory_path() / "tg_bound.csv").string();
  const std::string json = (std::filesystem::temp_directory_path() / "tg_bound.json").string();
  write_bound_report(s, csv, json, 707);
  std::ifstream fc(csv);
  std::string header;
  std::getline(fc, header);
  CHECK(header.find("sigma_max") != std::string::npos);
  int lines = 0;
  for (std::string line; std::getline(fc, line);) ++lines;
  CHECK(lines == 5);
  std::ifstream fj(json);
  std::string all((std::istreambuf_iterator<char>(fj)), std::istreambuf_iterator<char>());
  CHECK(all.find("satisfaction_fraction") != std::string::npos);
  std::remove(csv.c_str());
  std::remove(json.c_str());
}
