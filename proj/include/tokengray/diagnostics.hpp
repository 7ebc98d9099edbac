#pragma once

#include <string>
#include <vector>

#include "tokengray/graying.hpp"
#include "tokengray/matrix.hpp"
#include "tokengray/rng.hpp"
#include "tokengray/vitcore.hpp"

namespace tg {

struct BoundTrial {
  double lhs = 0.0;
  double rhs = 0.0;
  double c = 0.0;          // measured product of weight condition numbers
  double sigma_max = 0.0;  // of the data matrix X
  double sigma_min = 0.0;
  bool satisfied = false;
  bool excluded = false;   // singular product, left out of the ratio stats
  // Appendix-style bound values for the skip proposition (zero elsewhere):
  // c*smax^3/smin^3 versus (c*smax^3 + smax)/(smin^3 + smin).
  double bound_no_skip = 0.0;
  double bound_skip = 0.0;
};

struct BoundTrialStats {
  std::string name;
  int requested_trials = 0;
  int redraws = 0;   // rank-deficient draws replaced before evaluation
  int excluded = 0;
  std::vector<BoundTrial> trials;
  double satisfaction_fraction = 0.0;  // over non-excluded trials
  double median_ratio = 0.0;           // median lhs/rhs
  double median_ln_ratio = 0.0;        // median ln(lhs/rhs)
};

// kappa(X Wq Wk^T X^T X Wv) <= C * (smax/smin)^3 with C measured as
// kappa(Wq)*kappa(Wk)*kappa(Wv). Deterministic for full-rank draws.
BoundTrialStats verify_prop1(int n, int d, int trials, RngStream stream);

// kappa(XM + X) versus kappa(XM). psd_mode builds M = B^T B rescaled to the
// Frobenius magnitude of the raw attention product; otherwise M is the raw
// product itself (generally not PSD).
BoundTrialStats verify_prop2(int n, int d, int trials, RngStream stream, bool psd_mode);

// kappa(X Wup Wdown) <= C_up * C_down * kappa(X) with linear activation.
BoundTrialStats verify_ffn_bound(int n, int d, int trials, RngStream stream);

// kappa(Wcd X) <= kappa(Wcd) * kappa(X) with Wcd the unrolled depthwise
// convolution matrix (same padding) on a size x size grid.
BoundTrialStats verify_convmixer_bound(int channels, int size, int trials, RngStream stream);

struct LayerConditionRecord {
  int layer = 0;
  // Mean natural-log condition numbers over the evaluation batch; infinities
  // are counted separately so one rank-collapsed sample cannot hide the rest.
  double ln_k_sa_no_skip = 0.0;
  double ln_k_sa_skip = 0.0;
  double ln_k_mlp_no_skip = 0.0;
  double ln_k_mlp_skip = 0.0;
  double ln_k_in = 0.0;
  double ln_k_out = 0.0;
  int rank_deficient = 0;  // count of effectively-infinite taps in this layer
};

enum class TapPoint { PreNorm, PostNorm };

struct ConditionReport {
  std::vector<LayerConditionRecord> layers;
  int batch_size = 0;
  TapPoint tap = TapPoint::PreNorm;
};

// Forward passes over the batch, capturing the four embeddings of every
// layer plus the token matrices entering/leaving each SAB. PostNorm
// standardizes each tapped embedding row-wise (unit gamma, zero beta) before
// measuring, since the reference figures do not pin the tap's relation to
// the layer norms.
ConditionReport layer_condition_profile(const ModelParams& model,
                                        const std::vector<Image>& batch,
                                        const GrayingConfig& graying,
                                        TapPoint tap = TapPoint::PreNorm);

// Singular-value spectrum of the SAB's input-output Jacobian at layer
// layer_index, assembled exactly via reverse-mode VJPs.
std::vector<double> sab_jacobian_spectrum(const ModelParams& model, int layer_index,
                                          const Matrix& x,
                                          std::size_t entry_budget = 10'000'000);

// Report emission: one CSV row per trial/layer plus a JSON summary carrying
// run metadata.
void write_bound_report(const BoundTrialStats& stats, const std::string& csv_path,
                        const std::string& json_path, std::uint64_t seed);
void write_condition_report(const ConditionReport& report, const std::string& csv_path);

}  // namespace tg
