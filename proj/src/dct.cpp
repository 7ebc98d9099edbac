#include "tokengray/dct.hpp"

#include <cmath>

namespace tg {

DctBasis build_dct_basis(int n) {
  if (n < 1) throw std::invalid_argument("build_dct_basis: size must be >= 1");
  DctBasis b;
  b.n = n;
  b.d = Matrix(n, n);
  b.alpha.resize(n);
  for (int k = 0; k < n; ++k)
    b.alpha[k] = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      b.d(i, k) = b.alpha[k] * std::cos(M_PI * (2.0 * i + 1.0) * k / (2.0 * n));
  return b;
}

Matrix dct2(const Matrix& x) {
  if (!x.all_finite()) throw std::invalid_argument("dct2: input has non-finite entries");
  const DctBasis dn = build_dct_basis(x.rows());
  const DctBasis dd = build_dct_basis(x.cols());
  return matmul(dn.d.transpose(), matmul(x, dd.d));
}

Matrix idct2(const Matrix& xhat) {
  if (!xhat.all_finite()) throw std::invalid_argument("idct2: input has non-finite entries");
  const DctBasis dn = build_dct_basis(xhat.rows());
  const DctBasis dd = build_dct_basis(xhat.cols());
  return matmul(dn.d, matmul(xhat, dd.d.transpose()));
}

}  // namespace tg
