// pybind11 surface for the conditioning laboratory: numpy in, numpy out.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tokengray/dct.hpp"
#include "tokengray/diagnostics.hpp"
#include "tokengray/graying.hpp"
#include "tokengray/rng.hpp"
#include "tokengray/svd.hpp"

namespace py = pybind11;
using namespace tg;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data());
  return m;
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> a({m.rows(), m.cols()});
  std::copy(m.data(), m.data() + m.size(), a.mutable_data());
  return a;
}

py::dict stats_dict(const BoundTrialStats& s) {
  py::dict d;
  d["name"] = s.name;
  d["trials"] = s.requested_trials;
  d["excluded"] = s.excluded;
  d["redraws"] = s.redraws;
  d["satisfaction_fraction"] = s.satisfaction_fraction;
  d["median_ratio"] = s.median_ratio;
  d["median_ln_ratio"] = s.median_ln_ratio;
  return d;
}

}  // namespace

PYBIND11_MODULE(_tokengray, m) {
  m.doc() = "Condition-number laboratory for attention embeddings and token graying";

  m.def(
      "svd",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a) {
        SvdFactors f = svd(to_matrix(a));
        return py::make_tuple(to_array(f.u), f.sigma, to_array(f.v));
      },
      py::arg("a"), "Thin SVD (u, sigma, v) with sigma descending; a = u @ diag(sigma) @ v.T");

  m.def(
      "condition_number",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a) {
        ConditionNumber k = condition_number(to_matrix(a));
        py::dict d;
        d["value"] = k.value;
        d["log_value"] = k.log_value;
        d["finite"] = k.finite;
        d["sigma_max"] = k.sigma_max;
        d["sigma_min"] = k.sigma_min;
        d["rank_tol"] = k.rank_tol;
        return d;
      },
      py::arg("a"));

  m.def(
      "dct2",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a) {
        return to_array(dct2(to_matrix(a)));
      },
      py::arg("a"), "Orthogonal 2-D DCT-II");
  m.def(
      "idct2",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a) {
        return to_array(idct2(to_matrix(a)));
      },
      py::arg("a"));

  m.def(
      "svd_token_gray",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a, double epsilon,
         bool rescale) { return to_array(svd_token_gray(to_matrix(a), epsilon, rescale)); },
      py::arg("a"), py::arg("epsilon") = 0.95, py::arg("rescale") = false);
  m.def(
      "dct_token_gray",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a, double epsilon) {
        return to_array(dct_token_gray(to_matrix(a), epsilon));
      },
      py::arg("a"), py::arg("epsilon") = 0.95);

  m.def(
      "random_gaussian",
      [](int rows, int cols, std::uint64_t seed, std::uint64_t stream) {
        return to_array(random_gaussian(rows, cols, {seed, stream}));
      },
      py::arg("rows"), py::arg("cols"), py::arg("seed") = 0, py::arg("stream") = 0,
      "Platform-independent seeded Gaussian matrix");

  m.def(
      "verify_prop1",
      [](int n, int d, int trials, std::uint64_t seed) {
        return stats_dict(verify_prop1(n, d, trials, {seed, 0}));
      },
      py::arg("n") = 16, py::arg("d") = 8, py::arg("trials") = 100, py::arg("seed") = 7);
  m.def(
      "verify_prop2",
      [](int n, int d, int trials, std::uint64_t seed, bool psd_mode) {
        return stats_dict(verify_prop2(n, d, trials, {seed, 0}, psd_mode));
      },
      py::arg("n") = 16, py::arg("d") = 8, py::arg("trials") = 100, py::arg("seed") = 7,
      py::arg("psd_mode") = true);
  m.def(
      "verify_ffn_bound",
      [](int n, int d, int trials, std::uint64_t seed) {
        return stats_dict(verify_ffn_bound(n, d, trials, {seed, 0}));
      },
      py::arg("n") = 16, py::arg("d") = 8, py::arg("trials") = 100, py::arg("seed") = 7);
  m.def(
      "verify_convmixer_bound",
      [](int channels, int size, int trials, std::uint64_t seed) {
        return stats_dict(verify_convmixer_bound(channels, size, trials, {seed, 0}));
      },
      py::arg("channels") = 4, py::arg("size") = 8, py::arg("trials") = 100,
      py::arg("seed") = 7);
}
