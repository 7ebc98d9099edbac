#include "tokengray/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tg {

namespace {

// One-sided Jacobi on a tall-or-square matrix (rows >= cols). Columns of w
// are rotated until pairwise orthogonal; their norms are the singular values.
void jacobi_one_sided(Matrix& w, Matrix& v) {
  const int n = w.rows();
  const int d = w.cols();
  const double rel_tol = 1e-12;
  const int max_sweeps = 60;

  auto col_dot = [&](int p, int q) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += w(i, p) * w(i, q);
    return s;
  };

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool converged = true;
    for (int p = 0; p < d - 1; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double app = col_dot(p, p);
        const double aqq = col_dot(q, q);
        const double apq = col_dot(p, q);
        if (std::fabs(apq) <= rel_tol * std::sqrt(app * aqq) || apq == 0.0) continue;
        converged = false;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int i = 0; i < n; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (int i = 0; i < d; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (converged) break;
  }
}

// Fill column j of u with a unit vector orthogonal to columns [0, j).
// Needed only when the input is rank-deficient.
void orthonormal_fill(Matrix& u, int j) {
  const int n = u.rows();
  for (int cand = 0; cand < n; ++cand) {
    std::vector<double> e(n, 0.0);
    e[cand] = 1.0;
    for (int k = 0; k < j; ++k) {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += u(i, k) * e[i];
      for (int i = 0; i < n; ++i) e[i] -= dot * u(i, k);
    }
    double norm = 0.0;
    for (double x : e) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 1e-6) {
      for (int i = 0; i < n; ++i) u(i, j) = e[i] / norm;
      return;
    }
  }
  throw std::runtime_error("svd: failed to complete orthonormal basis");
}

}  // namespace

Matrix SvdFactors::reconstruct() const {
  const int r = static_cast<int>(sigma.size());
  Matrix us = u;
  for (int i = 0; i < us.rows(); ++i)
    for (int j = 0; j < r; ++j) us(i, j) *= sigma[j];
  return matmul(us, v.transpose());
}

SvdFactors svd(const Matrix& a) {
  if (a.empty()) throw std::invalid_argument("svd: empty matrix");
  if (!a.all_finite()) throw std::invalid_argument("svd: input has non-finite entries");

  const bool transposed = a.rows() < a.cols();
  Matrix w = transposed ? a.transpose() : a;
  const int n = w.rows();
  const int d = w.cols();
  Matrix v = Matrix::identity(d);
  jacobi_one_sided(w, v);

  std::vector<double> norms(d);
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += w(i, j) * w(i, j);
    norms[j] = std::sqrt(s);
  }
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return norms[x] > norms[y]; });

  Matrix u(n, d);
  Matrix vs(d, d);
  std::vector<double> sigma(d);
  const double frob = w.frob_norm();
  for (int jj = 0; jj < d; ++jj) {
    const int j = order[jj];
    sigma[jj] = norms[j];
    for (int i = 0; i < d; ++i) vs(i, jj) = v(i, j);
    if (norms[j] > frob * 1e-300 && norms[j] > 0.0) {
      for (int i = 0; i < n; ++i) u(i, jj) = w(i, j) / norms[j];
    } else {
      sigma[jj] = 0.0;
      orthonormal_fill(u, jj);
    }
  }

  if (transposed) return {vs, std::move(sigma), u};
  return {u, std::move(sigma), vs};
}

std::vector<double> singular_values(const Matrix& a) { return svd(a).sigma; }

ConditionNumber condition_number(const Matrix& a) {
  const auto sig = singular_values(a);
  ConditionNumber r;
  r.sigma_max = sig.front();
  r.sigma_min = sig.back();
  r.rank_tol = std::max(a.rows(), a.cols()) * std::numeric_limits<double>::epsilon() * r.sigma_max;
  if (r.sigma_min <= r.rank_tol || r.sigma_max == 0.0) {
    r.finite = false;
    r.value = std::numeric_limits<double>::infinity();
    r.log_value = std::numeric_limits<double>::infinity();
  } else {
    r.value = r.sigma_max / r.sigma_min;
    r.log_value = std::log(r.value);
  }
  return r;
}

double cond(const Matrix& a) { return condition_number(a).value; }

double ln_cond(const Matrix& a) { return condition_number(a).log_value; }

}  // namespace tg
