#include "tokengray/matrix.hpp"

namespace tg {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ, " + a.shape_str() + " x " +
                                b.shape_str());
  }
  Matrix c(a.rows(), b.cols());
  const int n = a.rows(), k = a.cols(), m = b.cols();
  // i-k-j order keeps the inner loop contiguous in both b and c.
  for (int i = 0; i < n; ++i) {
    const double* arow = a.data() + static_cast<std::size_t>(i) * k;
    double* crow = c.data() + static_cast<std::size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.raw()[i] - b.raw()[i]));
  return m;
}

}  // namespace tg
