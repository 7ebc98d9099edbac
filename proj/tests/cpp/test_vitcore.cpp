#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tokengray/rng.hpp"
#include "tokengray/vitcore.hpp"

using namespace tg;

namespace {

Image gaussian_image(int h, int w, int c, RngStream stream) {
  Rng rng(stream);
  Image img;
  img.h = h;
  img.w = w;
  img.c = c;
  img.pix.resize(static_cast<std::size_t>(h) * w * c);
  for (double& v : img.pix) v = rng.gaussian();
  return img;
}

}  // namespace

TEST_CASE("tokenize flattens patches channel-major in row-major patch order") {
  Image img;
  img.h = img.w = 4;
  img.c = 2;
  img.pix.resize(32);
  for (int i = 0; i < 32; ++i) img.pix[i] = i;
  Matrix tokens = tokenize(img, 2);
  REQUIRE(tokens.rows() == 4);   // 2x2 grid of 2x2 patches
  REQUIRE(tokens.cols() == 8);   // 2 channels * 4 pixels
  // Patch 0 covers (y,x) in {0,1}^2: channel 0 pixels 0,1,4,5 then channel 1.
  CHECK(tokens(0, 0) == 0);
  CHECK(tokens(0, 1) == 1);
  CHECK(tokens(0, 2) == 4);
  CHECK(tokens(0, 3) == 5);
  CHECK(tokens(0, 4) == 16);
  // Patch 3 (bottom right), channel 0 starts at pixel (2,2) = 10.
  CHECK(tokens(3, 0) == 10);
}

TEST_CASE("softmax rows are simplex points and shift invariant") {
  Matrix x = random_gaussian(4, 6, {500, 0});
  Matrix s = softmax_rows(x);
  for (int i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 6; ++j) {
      CHECK(s(i, j) > 0.0);
      sum += s(i, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  Matrix shifted = x;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) shifted(i, j) += 100.0;
  CHECK(max_abs_diff(softmax_rows(shifted), s) < 1e-12);
}

TEST_CASE("layernorm standardizes rows with unit gamma") {
  Matrix x = random_gaussian(3, 8, {501, 0});
  LayerNormParams p;
  p.gamma = Matrix::filled(1, 8, 1.0);
  p.beta = Matrix(1, 8);
  Matrix y = layernorm(x, p);
  for (int i = 0; i < 3; ++i) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < 8; ++j) mean += y(i, j);
    mean /= 8;
    for (int j = 0; j < 8; ++j) var += (y(i, j) - mean) * (y(i, j) - mean);
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(var / 8 == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("multi-head attention matches the per-head loop oracle") {
  for (AttentionKind kind : {AttentionKind::Softmax, AttentionKind::ScaledLinear}) {
    AttentionParams p;
    p.heads = 4;
    p.kind = kind;
    p.w_q = random_gaussian(16, 16, {502, 0});
    p.w_k = random_gaussian(16, 16, {502, 1});
    p.w_v = random_gaussian(16, 16, {502, 2});
    Matrix x = random_gaussian(6, 16, {502, 3});
    CHECK(max_abs_diff(self_attention(x, p), oracle::naive_attention(x, p)) < 1e-10);
  }
}

TEST_CASE("skip toggles change the block output by exactly the identity term") {
  VitSpec spec;
  spec.dim = 16;
  spec.heads = 2;
  spec.layers = 1;
  spec.image_h = spec.image_w = 8;
  spec.patch = 4;
  ModelParams model = make_vit(spec, {503, 0});
  Matrix x = random_gaussian(model.tokens(), spec.dim, {503, 1});
  Block with = model.blocks[0];
  Block without = model.blocks[0];
  without.cfg.skip_sab = false;
  Matrix a = sab_forward(x, with.attn, with.ln1, with.cfg);
  Matrix b = sab_forward(x, without.attn, without.ln1, without.cfg);
  Matrix diff = a;
  diff -= b;
  CHECK(max_abs_diff(diff, x) < 1e-12);
}

TEST_CASE("vit forward produces finite logits of the right shape") {
  VitSpec spec;
  spec.dim = 24;
  spec.heads = 3;
  spec.layers = 2;
  spec.image_h = spec.image_w = 8;
  spec.patch = 4;
  spec.classes = 5;
  ModelParams model = make_vit(spec, {504, 0});
  std::vector<Image> imgs{gaussian_image(8, 8, 1, {504, 1}), gaussian_image(8, 8, 1, {504, 2})};
  for (GrayingMethod m : {GrayingMethod::None, GrayingMethod::SvdTG, GrayingMethod::DctTG}) {
    GrayingConfig g;
    g.method = m;
    Matrix logits = vit_forward(imgs, model, g);
    CHECK(logits.rows() == 2);
    CHECK(logits.cols() == 5);
    CHECK(logits.all_finite());
  }
}

TEST_CASE("run_blocks taps are consistent with the configured output") {
  VitSpec spec;
  spec.dim = 16;
  spec.heads = 2;
  spec.layers = 2;
  spec.image_h = spec.image_w = 8;
  spec.patch = 4;
  ModelParams model = make_vit(spec, {505, 0});
  Matrix embedded = random_gaussian(model.tokens(), spec.dim, {505, 1});
  std::vector<LayerTaps> taps;
  run_blocks(embedded, model, &taps);
  REQUIRE(taps.size() == 2);
  CHECK(max_abs_diff(taps[0].x_in, embedded) == 0.0);
  // With skips enabled the tapped skip embeddings are transformation + input.
  Matrix expect = taps[0].sa_no_skip;
  expect += taps[0].x_in;
  CHECK(max_abs_diff(taps[0].sa_skip, expect) < 1e-12);
  CHECK(max_abs_diff(taps[0].x_out, taps[0].sa_skip) < 1e-12);
  CHECK(max_abs_diff(taps[1].x_in, taps[0].x_out) > 0.0);  // FFN ran in between
}

TEST_CASE("depthwise conv matches the naive loop oracle") {
  const int side = 6, channels = 3, ksize = 3;
  Matrix x = random_gaussian(channels, side * side, {506, 0});
  Matrix k = random_gaussian(channels, ksize * ksize, {506, 1});
  CHECK(max_abs_diff(depthwise_conv(x, k, side, ksize), oracle::naive_depthwise(x, k, side, ksize)) <
        1e-12);
}

TEST_CASE("convmixer forward is finite with and without skips") {
  ConvMixerSpec spec;
  spec.image_h = spec.image_w = 8;
  spec.patch = 2;
  spec.features = 8;
  spec.layers = 2;
  for (bool skip : {true, false}) {
    spec.skip = skip;
    ConvMixerParams model = make_convmixer(spec, {507, 0});
    std::vector<Image> imgs{gaussian_image(8, 8, 1, {507, 1})};
    Matrix logits = convmixer_forward(imgs, model);
    CHECK(logits.rows() == 1);
    CHECK(logits.cols() == spec.classes);
    CHECK(logits.all_finite());
  }
}
