#include <doctest.h>

#include <cmath>

#include "tokengray/autodiff.hpp"
#include "tokengray/model_tape.hpp"
#include "tokengray/rng.hpp"
#include "tokengray/vitcore.hpp"

using namespace tg;

namespace {

constexpr double kTol = 1e-6;

Matrix positive_random(int r, int c, RngStream s) {
  Matrix m = random_gaussian(r, c, s);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = 0.5 + std::fabs(m(i, j));
  return m;
}

}  // namespace

TEST_CASE("gradients of elementwise and linear primitives") {
  Matrix x = random_gaussian(3, 4, {600, 0});
  Matrix w = random_gaussian(4, 5, {600, 1});
  Matrix y = random_gaussian(3, 4, {600, 2});

  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.add(v, t.input(y)));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.sub(v, t.input(y)));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.mul(v, t.input(y)));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.scale(v, -2.5));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.matmul(v, t.input(w)));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.mul(t.transpose(v), t.transpose(v)));
        }, x) < kTol);
}

TEST_CASE("gradients of shape primitives") {
  Matrix x = random_gaussian(4, 6, {601, 0});
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.mul(t.slice_cols(v, 1, 4), t.slice_cols(v, 2, 5)));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.concat_cols({t.slice_cols(v, 0, 2), t.slice_cols(v, 3, 6)}));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.stack_rows({t.row(v, 0), t.row(v, 2)}));
        }, x) < kTol);
  Matrix rowvec = random_gaussian(1, 6, {601, 1});
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.mul(t.add_broadcast_row(v, t.input(rowvec)), v));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.mul(t.mean_group_cols(v, 2), t.mean_group_cols(v, 2)));
        }, x) < kTol);
}

TEST_CASE("gradients of nonlinear primitives") {
  Matrix x = positive_random(3, 5, {602, 0});  // away from relu/pow kinks
  Matrix target = random_gaussian(3, 5, {602, 1});
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.gelu(v));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.relu(v));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.pow_elem(v, 0.7));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.mul(t.softmax_rows(v), t.input(target)));
        }, x) < kTol);
  Matrix gamma = positive_random(1, 5, {602, 2});
  Matrix beta = random_gaussian(1, 5, {602, 3});
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.mul(t.layernorm(v, t.input(gamma), t.input(beta)), t.input(target)));
        }, x) < kTol);
}

TEST_CASE("gradients of losses") {
  Matrix logits = random_gaussian(4, 3, {603, 0});
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.cross_entropy(v, {0, 2, 1, 2});
        }, logits) < kTol);
  Matrix target = random_gaussian(4, 3, {603, 1});
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.mse(v, target);
        }, logits) < kTol);
}

TEST_CASE("gradients of conv and batchnorm primitives") {
  const int side = 4, channels = 3, batch = 2;
  Matrix x = random_gaussian(channels, batch * side * side, {604, 0});
  Matrix k = random_gaussian(channels, 9, {604, 1});
  Matrix gamma = positive_random(1, channels, {604, 2});
  Matrix beta = random_gaussian(1, channels, {604, 3});
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.mul(t.depthwise_conv(v, t.input(k), batch, side, 3), v));
        }, x) < kTol);
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          ad::BatchNormState state;
          state.mean = Matrix(1, channels);
          state.var = Matrix::filled(1, channels, 1.0);
          return t.sum(t.mul(t.batchnorm_train(v, t.input(gamma), t.input(beta), state), v));
        }, x) < 1e-5);  // batch statistics make this the least smooth primitive
  ad::BatchNormState fixed;
  fixed.mean = random_gaussian(1, channels, {604, 4});
  fixed.var = positive_random(1, channels, {604, 5});
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          return t.sum(t.mul(t.batchnorm_eval(v, t.input(gamma), t.input(beta), fixed), v));
        }, x) < kTol);
}

TEST_CASE("gradient of a composed attention block") {
  VitSpec spec;
  spec.dim = 8;
  spec.heads = 2;
  spec.layers = 1;
  spec.image_h = spec.image_w = 8;
  spec.patch = 4;
  ModelParams model = make_vit(spec, {605, 0});
  Matrix x = random_gaussian(5, 8, {605, 1});
  for (bool skip : {true, false}) {
    model.blocks[0].cfg.skip_sab = skip;
    CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
            return t.sum(t.mul(sab_tape(t, v, model.blocks[0]), v));
          }, x) < kTol);
  }
}

TEST_CASE("gradient of the full vit loss with respect to the input tokens") {
  VitSpec spec;
  spec.dim = 12;
  spec.heads = 2;
  spec.layers = 2;
  spec.image_h = spec.image_w = 8;
  spec.patch = 4;
  spec.classes = 3;
  ModelParams model = make_vit(spec, {606, 0});
  Matrix tokens = random_gaussian(model.patches(), spec.patch * spec.patch, {606, 1});
  CHECK(ad::grad_check([&](ad::Tape& t, ad::Var v) {
          // Rebuild the forward from the token input so v participates.
          VitBinder binder = bind_vit(t, model);
          auto look = [&](const std::string& name) {
            for (std::size_t i = 0; i < binder.names.size(); ++i)
              if (binder.names[i] == name) return binder.vars[i];
            throw std::logic_error("missing " + name);
          };
          ad::Var x = t.matmul(v, look("w_embed"));
          x = t.stack_rows({look("cls"), x});
          x = t.add(x, look("pos"));
          x = sab_tape(t, x, model.blocks[0]);
          return t.cross_entropy(t.add(t.matmul(t.row(x, 0), look("w_head")), look("b_head")),
                                 {1});
        }, tokens) < kTol);
}

TEST_CASE("jacobian agrees with finite differences") {
  Matrix w = random_gaussian(3, 4, {607, 0});
  Matrix x = random_gaussian(2, 3, {607, 1});
  auto f = [&](ad::Tape& t, ad::Var v) { return t.softmax_rows(t.matmul(v, t.input(w))); };
  Matrix j = ad::jacobian(f, x);
  REQUIRE(j.rows() == 8);
  REQUIRE(j.cols() == 6);
  const double h = 1e-6;
  for (int col = 0; col < 6; ++col) {
    Matrix xp = x, xm = x;
    xp(col / 3, col % 3) += h;
    xm(col / 3, col % 3) -= h;
    ad::Tape tp, tm;
    Matrix fp = tp.value(f(tp, tp.input(xp)));
    Matrix fm = tm.value(f(tm, tm.input(xm)));
    for (int row = 0; row < 8; ++row) {
      const double fd = (fp(row / 4, row % 4) - fm(row / 4, row % 4)) / (2 * h);
      CHECK(j(row, col) == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("jacobian refuses to exceed the entry budget") {
  Matrix x = random_gaussian(40, 40, {608, 0});
  auto f = [&](ad::Tape& t, ad::Var v) { return t.mul(v, v); };
  CHECK_THROWS(ad::jacobian(f, x, /*entry_budget=*/1000));
}

TEST_CASE("stale handles from before reset are rejected") {
  ad::Tape t;
  ad::Var v = t.input(random_gaussian(2, 2, {609, 0}));
  t.reset();
  CHECK_THROWS_AS(t.value(v), std::logic_error);
}

TEST_CASE("repeated backward calls are independent") {
  ad::Tape t;
  ad::Var v = t.input(random_gaussian(2, 2, {610, 0}));
  ad::Var loss = t.sum(t.mul(v, v));
  t.backward(loss);
  Matrix g1 = t.grad(v);
  t.backward(loss);
  CHECK(max_abs_diff(g1, t.grad(v)) == 0.0);  // not doubled by accumulation
}
