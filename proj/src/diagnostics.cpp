#include "tokengray/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tokengray/autodiff.hpp"
#include "tokengray/model_tape.hpp"
#include "tokengray/svd.hpp"

namespace tg {

namespace {

Matrix draw(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.gaussian();
  return m;
}

// Redraws until the matrix is numerically full rank; pathological Gaussian
// draws are measure-zero but a redraw keeps every trial well defined.
Matrix draw_full_rank(Rng& rng, int rows, int cols, int* redraws) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix m = draw(rng, rows, cols);
    if (condition_number(m).finite) return m;
    ++(*redraws);
  }
  throw std::runtime_error("draw_full_rank: persistent rank deficiency");
}

void finalize(BoundTrialStats& s) {
  std::vector<double> ratios;
  int satisfied = 0, counted = 0;
  for (const BoundTrial& t : s.trials) {
    if (t.excluded) {
      ++s.excluded;
      continue;
    }
    ++counted;
    if (t.satisfied) ++satisfied;
    ratios.push_back(t.lhs / t.rhs);
  }
  s.satisfaction_fraction = counted > 0 ? static_cast<double>(satisfied) / counted : 0.0;
  if (!ratios.empty()) {
    std::sort(ratios.begin(), ratios.end());
    const std::size_t n = ratios.size();
    s.median_ratio = n % 2 == 1 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
    s.median_ln_ratio = std::log(s.median_ratio);
  }
}

// Loose relative slack for comparing two independently computed condition
// numbers; the bound checks are mathematical, not floating-point-exact.
constexpr double kBoundSlack = 1e-9;

}  // namespace

BoundTrialStats verify_prop1(int n, int d, int trials, RngStream stream) {
  if (n <= 0 || d <= 0 || trials <= 0) throw std::invalid_argument("verify_prop1: bad sizes");
  BoundTrialStats s;
  s.name = "prop1_attention_bound";
  s.requested_trials = trials;
  Rng rng(stream);
  for (int t = 0; t < trials; ++t) {
    BoundTrial trial;
    Matrix x = draw_full_rank(rng, n, d, &s.redraws);
    Matrix wq = draw_full_rank(rng, d, d, &s.redraws);
    Matrix wk = draw_full_rank(rng, d, d, &s.redraws);
    Matrix wv = draw_full_rank(rng, d, d, &s.redraws);
    const ConditionNumber kx = condition_number(x);
    trial.sigma_max = kx.sigma_max;
    trial.sigma_min = kx.sigma_min;
    trial.c = cond(wq) * cond(wk) * cond(wv);
    Matrix prod = matmul(matmul(matmul(matmul(x, wq), wk.transpose()), x.transpose()),
                         matmul(x, wv));
    const ConditionNumber kp = condition_number(prod);
    if (!kp.finite) {
      trial.excluded = true;
      s.trials.push_back(trial);
      continue;
    }
    trial.lhs = kp.value;
    trial.rhs = trial.c * std::pow(kx.value, 3.0);
    trial.satisfied = trial.lhs <= trial.rhs * (1.0 + kBoundSlack);
    s.trials.push_back(trial);
  }
  finalize(s);
  return s;
}

BoundTrialStats verify_prop2(int n, int d, int trials, RngStream stream, bool psd_mode) {
  if (n <= 0 || d <= 0 || trials <= 0) throw std::invalid_argument("verify_prop2: bad sizes");
  BoundTrialStats s;
  s.name = psd_mode ? "prop2_skip_psd" : "prop2_skip_raw";
  s.requested_trials = trials;
  Rng rng(stream);
  for (int t = 0; t < trials; ++t) {
    BoundTrial trial;
    Matrix x = draw_full_rank(rng, n, d, &s.redraws);
    Matrix wq = draw_full_rank(rng, d, d, &s.redraws);
    Matrix wk = draw_full_rank(rng, d, d, &s.redraws);
    Matrix wv = draw_full_rank(rng, d, d, &s.redraws);
    Matrix m = matmul(matmul(matmul(wq, wk.transpose()), matmul(x.transpose(), x)), wv);
    if (psd_mode) {
      // B^T B rescaled to the attention product's Frobenius magnitude, so the
      // skip term competes against a comparably sized transformation.
      Matrix b = draw(rng, d, d);
      Matrix btb = matmul(b.transpose(), b);
      const double target = m.frob_norm();
      const double got = btb.frob_norm();
      if (got <= 0.0) {
        trial.excluded = true;
        s.trials.push_back(trial);
        continue;
      }
      btb *= target / got;
      m = btb;
    }
    const ConditionNumber kx = condition_number(x);
    trial.sigma_max = kx.sigma_max;
    trial.sigma_min = kx.sigma_min;
    trial.c = cond(wq) * cond(wk) * cond(wv);
    const double s3max = std::pow(kx.sigma_max, 3.0);
    const double s3min = std::pow(kx.sigma_min, 3.0);
    trial.bound_no_skip = trial.c * s3max / s3min;
    trial.bound_skip = (trial.c * s3max + kx.sigma_max) / (s3min + kx.sigma_min);
    Matrix xm = matmul(x, m);
    Matrix with_skip = xm;
    with_skip += x;
    const ConditionNumber k_no = condition_number(xm);
    const ConditionNumber k_yes = condition_number(with_skip);
    if (!k_no.finite || !k_yes.finite) {
      trial.excluded = true;
      s.trials.push_back(trial);
      continue;
    }
    trial.lhs = k_yes.value;  // with skip
    trial.rhs = k_no.value;   // without skip
    trial.satisfied = trial.lhs < trial.rhs;
    s.trials.push_back(trial);
  }
  finalize(s);
  return s;
}

BoundTrialStats verify_ffn_bound(int n, int d, int trials, RngStream stream) {
  if (n <= 0 || d <= 0 || trials <= 0)
    throw std::invalid_argument("verify_ffn_bound: bad sizes");
  BoundTrialStats s;
  s.name = "ffn_bound";
  s.requested_trials = trials;
  Rng rng(stream);
  for (int t = 0; t < trials; ++t) {
    BoundTrial trial;
    Matrix x = draw_full_rank(rng, n, d, &s.redraws);
    Matrix w_up = draw_full_rank(rng, d, 4 * d, &s.redraws);
    Matrix w_down = draw_full_rank(rng, 4 * d, d, &s.redraws);
    const ConditionNumber kx = condition_number(x);
    trial.sigma_max = kx.sigma_max;
    trial.sigma_min = kx.sigma_min;
    trial.c = cond(w_up) * cond(w_down);
    Matrix prod = matmul(matmul(x, w_up), w_down);
    const ConditionNumber kp = condition_number(prod);
    if (!kp.finite) {
      trial.excluded = true;
      s.trials.push_back(trial);
      continue;
    }
    trial.lhs = kp.value;
    trial.rhs = trial.c * kx.value;
    trial.satisfied = trial.lhs <= trial.rhs * (1.0 + kBoundSlack);
    s.trials.push_back(trial);
  }
  finalize(s);
  return s;
}

namespace {

// Unrolled depthwise convolution operator on a size x size grid with same
// (zero) padding: (size^2) x (size^2), acting on a vectorized row-major grid.
Matrix unroll_conv(const Matrix& kernel, int size, int ksize) {
  const int half = ksize / 2;
  Matrix w(size * size, size * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const int out = y * size + x;
      for (int ky = 0; ky < ksize; ++ky) {
        for (int kx = 0; kx < ksize; ++kx) {
          const int sy = y + ky - half;
          const int sx = x + kx - half;
          if (sy < 0 || sy >= size || sx < 0 || sx >= size) continue;
          w(out, sy * size + sx) = kernel(0, ky * ksize + kx);
        }
      }
    }
  }
  return w;
}

}  // namespace

BoundTrialStats verify_convmixer_bound(int channels, int size, int trials, RngStream stream) {
  if (channels <= 0 || size <= 0 || trials <= 0)
    throw std::invalid_argument("verify_convmixer_bound: bad sizes");
  const int ksize = 3;
  BoundTrialStats s;
  s.name = "convmixer_bound";
  s.requested_trials = trials;
  Rng rng(stream);
  for (int t = 0; t < trials; ++t) {
    BoundTrial trial;
    Matrix kernel = draw(rng, 1, ksize * ksize);
    Matrix w = unroll_conv(kernel, size, ksize);
    Matrix x = draw_full_rank(rng, size * size, channels, &s.redraws);
    const ConditionNumber kw = condition_number(w);
    if (!kw.finite) {
      // Singular unrolled operator: both sides are infinite, nothing to test.
      trial.excluded = true;
      s.trials.push_back(trial);
      continue;
    }
    const ConditionNumber kx = condition_number(x);
    trial.sigma_max = kx.sigma_max;
    trial.sigma_min = kx.sigma_min;
    trial.c = kw.value;
    Matrix prod = matmul(w, x);
    const ConditionNumber kp = condition_number(prod);
    if (!kp.finite) {
      trial.excluded = true;
      s.trials.push_back(trial);
      continue;
    }
    trial.lhs = kp.value;
    trial.rhs = kw.value * kx.value;
    trial.satisfied = trial.lhs <= trial.rhs * (1.0 + kBoundSlack);
    s.trials.push_back(trial);
  }
  finalize(s);
  return s;
}

namespace {

// Row-standardizes a tapped embedding (layer norm with unit gamma and zero
// beta) for the post-norm measurement variant.
Matrix standardize_rows(const Matrix& x) {
  LayerNormParams p;
  p.gamma = Matrix::filled(1, x.cols(), 1.0);
  p.beta = Matrix(1, x.cols());
  return layernorm(x, p);
}

struct LnAccum {
  double sum = 0.0;
  int finite = 0;
  int infinite = 0;

  void add(const ConditionNumber& k) {
    if (k.finite) {
      sum += k.log_value;
      ++finite;
    } else {
      ++infinite;
    }
  }
  double mean() const {
    if (finite == 0) return std::numeric_limits<double>::infinity();
    return sum / finite;
  }
};

}  // namespace

ConditionReport layer_condition_profile(const ModelParams& model,
                                        const std::vector<Image>& batch,
                                        const GrayingConfig& graying, TapPoint tap) {
  if (batch.empty()) throw std::invalid_argument("layer_condition_profile: empty batch");
  const int layers = static_cast<int>(model.blocks.size());
  std::vector<LnAccum> sa_no(layers), sa_yes(layers), mlp_no(layers), mlp_yes(layers),
      k_in(layers), k_out(layers);
  for (const Image& img : batch) {
    Matrix tokens = apply_graying(tokenize(img, model.spec.patch), graying);
    Matrix embedded = embed_tokens(tokens, model);
    std::vector<LayerTaps> taps;
    run_blocks(embedded, model, &taps);
    for (int l = 0; l < layers; ++l) {
      auto measure = [&](const Matrix& m) {
        return condition_number(tap == TapPoint::PostNorm ? standardize_rows(m) : m);
      };
      sa_no[l].add(measure(taps[l].sa_no_skip));
      sa_yes[l].add(measure(taps[l].sa_skip));
      mlp_no[l].add(measure(taps[l].mlp_no_skip));
      mlp_yes[l].add(measure(taps[l].mlp_skip));
      k_in[l].add(measure(taps[l].x_in));
      k_out[l].add(measure(taps[l].x_out));
    }
  }
  ConditionReport report;
  report.batch_size = static_cast<int>(batch.size());
  report.tap = tap;
  for (int l = 0; l < layers; ++l) {
    LayerConditionRecord rec;
    rec.layer = l;
    rec.ln_k_sa_no_skip = sa_no[l].mean();
    rec.ln_k_sa_skip = sa_yes[l].mean();
    rec.ln_k_mlp_no_skip = mlp_no[l].mean();
    rec.ln_k_mlp_skip = mlp_yes[l].mean();
    rec.ln_k_in = k_in[l].mean();
    rec.ln_k_out = k_out[l].mean();
    rec.rank_deficient = sa_no[l].infinite + sa_yes[l].infinite + mlp_no[l].infinite +
                         mlp_yes[l].infinite + k_in[l].infinite + k_out[l].infinite;
    report.layers.push_back(rec);
  }
  return report;
}

std::vector<double> sab_jacobian_spectrum(const ModelParams& model, int layer_index,
                                          const Matrix& x, std::size_t entry_budget) {
  if (layer_index < 0 || layer_index >= static_cast<int>(model.blocks.size()))
    throw std::invalid_argument("sab_jacobian_spectrum: layer index out of range");
  const Block& block = model.blocks[layer_index];
  Matrix j = ad::jacobian(
      [&block](ad::Tape& t, ad::Var xv) { return sab_tape(t, xv, block); }, x, entry_budget);
  return singular_values(j);
}

void write_bound_report(const BoundTrialStats& stats, const std::string& csv_path,
                        const std::string& json_path, std::uint64_t seed) {
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("write_bound_report: cannot open " + csv_path);
    out << "trial,lhs,rhs,c,sigma_max,sigma_min,satisfied,excluded,bound_no_skip,bound_skip\n";
    out.precision(17);
    for (std::size_t i = 0; i < stats.trials.size(); ++i) {
      const BoundTrial& t = stats.trials[i];
      out << i << ',' << t.lhs << ',' << t.rhs << ',' << t.c << ',' << t.sigma_max << ','
          << t.sigma_min << ',' << (t.satisfied ? 1 : 0) << ',' << (t.excluded ? 1 : 0) << ','
          << t.bound_no_skip << ',' << t.bound_skip << '\n';
    }
  }
  if (!json_path.empty()) {
    nlohmann::json j;
    j["name"] = stats.name;
    j["seed"] = seed;
    j["requested_trials"] = stats.requested_trials;
    j["redraws"] = stats.redraws;
    j["excluded"] = stats.excluded;
    j["satisfaction_fraction"] = stats.satisfaction_fraction;
    j["median_ratio"] = stats.median_ratio;
    j["median_ln_ratio"] = stats.median_ln_ratio;
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("write_bound_report: cannot open " + json_path);
    out << j.dump(2) << '\n';
  }
}

void write_condition_report(const ConditionReport& report, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("write_condition_report: cannot open " + csv_path);
  out << "layer,ln_k_sa_no_skip,ln_k_sa_skip,ln_k_mlp_no_skip,ln_k_mlp_skip,ln_k_in,"
         "ln_k_out,rank_deficient\n";
  out.precision(17);
  for (const LayerConditionRecord& r : report.layers) {
    out << r.layer << ',' << r.ln_k_sa_no_skip << ',' << r.ln_k_sa_skip << ','
        << r.ln_k_mlp_no_skip << ',' << r.ln_k_mlp_skip << ',' << r.ln_k_in << ','
        << r.ln_k_out << ',' << r.rank_deficient << '\n';
  }
}

}  // namespace tg
