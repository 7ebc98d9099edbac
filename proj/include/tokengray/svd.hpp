#pragma once

#include <vector>

#include "tokengray/matrix.hpp"

namespace tg {

// Thin SVD A = U diag(sigma) V^T with r = min(rows, cols) columns in U and V
// and sigma descending, non-negative.
struct SvdFactors {
  Matrix u;                   // rows x r
  std::vector<double> sigma;  // r, descending
  Matrix v;                   // cols x r

  Matrix reconstruct() const;
};

// One-sided Jacobi with cyclic sweeps. Chosen for high relative accuracy of
// small singular values; kappa is dominated by sigma_min accuracy.
SvdFactors svd(const Matrix& a);

std::vector<double> singular_values(const Matrix& a);

struct ConditionNumber {
  double value = 0.0;      // sigma_max / sigma_min; +inf when rank-deficient
  double log_value = 0.0;  // natural log, matching the paper's plots
  bool finite = true;
  double rank_tol = 0.0;   // max(n,d) * eps * sigma_max
  double sigma_max = 0.0;
  double sigma_min = 0.0;
};

// sigma_min below max(n,d)*eps*sigma_max counts as numerically zero and the
// condition number is reported as effectively infinite.
ConditionNumber condition_number(const Matrix& a);

// Convenience form: +inf for rank-deficient input.
double cond(const Matrix& a);
double ln_cond(const Matrix& a);

}  // namespace tg
