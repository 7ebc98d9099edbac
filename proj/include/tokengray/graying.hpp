#pragma once

#include <vector>

#include "tokengray/matrix.hpp"

namespace tg {

enum class GrayingMethod { None, SvdTG, DctTG };

struct GrayingConfig {
  GrayingMethod method = GrayingMethod::None;
  double epsilon = 0.95;
  // Multiply the SVD-TG output by sigma_max so the largest singular value is
  // kept instead of normalized to 1. Off by default; both variants have the
  // same condition number.
  bool rescale = false;
};

// Spectral amplification via SVD reconstruction: X~ = U * (Sigma/sigma_max)^eps * V^T.
// The output's largest singular value is 1, so ln kappa(X~) = eps * ln kappa(X).
// Zero singular values stay zero (0^eps = 0 for eps > 0).
Matrix svd_token_gray(const Matrix& x, double epsilon, bool rescale = false);

// Frequency-magnitude amplification: DCT, normalize magnitudes by the max,
// raise to eps, restore signs and the max, inverse DCT. Overall magnitude is
// preserved, unlike the SVD variant.
Matrix dct_token_gray(const Matrix& x, double epsilon);

// Applies the configured transform to each sample independently; None is the
// identity. All samples must share one shape.
std::vector<Matrix> gray_batch(const std::vector<Matrix>& batch, const GrayingConfig& config);

Matrix apply_graying(const Matrix& x, const GrayingConfig& config);

}  // namespace tg
