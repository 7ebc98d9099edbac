#pragma once

#include <vector>

#include "tokengray/matrix.hpp"

namespace tg {

// DCT-II basis. Row index i is the sample index, column index k the
// frequency index: d(i,k) = alpha_k * cos(pi*(2i+1)*k / (2N)). The forward
// transform therefore applies D^T.
struct DctBasis {
  int n = 0;
  Matrix d;                   // n x n, orthogonal
  std::vector<double> alpha;  // alpha_0 = sqrt(1/N), alpha_k = sqrt(2/N)
};

DctBasis build_dct_basis(int n);

// 2D DCT of an n x d matrix: Xhat = Dn^T * X * Dd.
Matrix dct2(const Matrix& x);

// Exact inverse: X = Dn * Xhat * Dd^T.
Matrix idct2(const Matrix& xhat);

}  // namespace tg
