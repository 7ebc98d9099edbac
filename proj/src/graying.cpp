#include "tokengray/graying.hpp"

#include <cmath>

#include "tokengray/dct.hpp"
#include "tokengray/svd.hpp"

namespace tg {

namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("token graying: epsilon must be in (0, 1], got " +
                                std::to_string(epsilon));
  }
}

}  // namespace

Matrix svd_token_gray(const Matrix& x, double epsilon, bool rescale) {
  check_epsilon(epsilon);
  SvdFactors f = svd(x);
  const double sigma_max = f.sigma.front();
  if (sigma_max == 0.0) return x;  // all-zero input, nothing to amplify
  for (double& s : f.sigma) s = (s == 0.0 ? 0.0 : std::pow(s / sigma_max, epsilon));
  Matrix out = f.reconstruct();
  if (rescale) out *= sigma_max;
  return out;
}

Matrix dct_token_gray(const Matrix& x, double epsilon) {
  check_epsilon(epsilon);
  Matrix xhat = dct2(x);
  const double m = xhat.max_abs();
  if (m == 0.0) return x;  // all-zero input returned unchanged
  for (double& v : xhat.raw()) {
    const double sign = (v > 0.0) - (v < 0.0);
    v = std::pow(std::fabs(v) / m, epsilon) * sign * m;
  }
  return idct2(xhat);
}

Matrix apply_graying(const Matrix& x, const GrayingConfig& config) {
  switch (config.method) {
    case GrayingMethod::None:
      return x;
    case GrayingMethod::SvdTG:
      return svd_token_gray(x, config.epsilon, config.rescale);
    case GrayingMethod::DctTG:
      return dct_token_gray(x, config.epsilon);
  }
  throw std::logic_error("apply_graying: unknown method");
}

std::vector<Matrix> gray_batch(const std::vector<Matrix>& batch, const GrayingConfig& config) {
  std::vector<Matrix> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (i > 0 && !batch[i].same_shape(batch[0])) {
      throw std::invalid_argument("gray_batch: sample " + std::to_string(i) + " has shape " +
                                  batch[i].shape_str() + ", expected " + batch[0].shape_str());
    }
    try {
      out.push_back(apply_graying(batch[i], config));
    } catch (const std::exception& e) {
      throw std::invalid_argument("gray_batch: sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tg
