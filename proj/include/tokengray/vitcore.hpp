#pragma once

#include <vector>

#include "tokengray/graying.hpp"
#include "tokengray/matrix.hpp"
#include "tokengray/rng.hpp"

namespace tg {

enum class Activation { Gelu, Relu, Linear };
enum class AttentionKind { Softmax, ScaledLinear };

struct AttentionParams {
  Matrix w_q, w_k, w_v;  // d x d; heads slice the columns
  int heads = 1;
  AttentionKind kind = AttentionKind::Softmax;
  double linear_scale = 16.0;  // the 1/k scale of the linear variant
};

struct FfnParams {
  Matrix w_up;    // d x 4d
  Matrix w_down;  // 4d x d
  Activation act = Activation::Gelu;
};

struct LayerNormParams {
  Matrix gamma;  // 1 x d
  Matrix beta;   // 1 x d
  double eps = 1e-6;
};

struct BlockConfig {
  bool skip_sab = true;
  bool skip_ffn = true;
  bool prenorm = true;
};

struct Block {
  AttentionParams attn;
  FfnParams ffn;
  LayerNormParams ln1, ln2;
  BlockConfig cfg;
};

// Planar channel-major image: pix[ch * h * w + y * w + x].
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<double> pix;

  double at(int ch, int y, int x) const {
    return pix[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
  double& at(int ch, int y, int x) {
    return pix[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
};

struct VitSpec {
  int image_h = 32, image_w = 32, channels = 1;
  int patch = 4;
  int dim = 64;
  int heads = 4;
  int layers = 4;
  int classes = 10;
  bool use_cls = true;
  AttentionKind attention = AttentionKind::Softmax;
  double linear_scale = 16.0;
  Activation ffn_act = Activation::Gelu;
  BlockConfig block;
};

struct ModelParams {
  VitSpec spec;
  Matrix w_embed;  // (p*p*c) x dim
  Matrix cls;      // 1 x dim
  Matrix pos;      // tokens x dim (class token included when enabled)
  std::vector<Block> blocks;
  LayerNormParams ln_final;
  Matrix w_head;  // dim x classes
  Matrix b_head;  // 1 x classes

  int patches() const {
    return (spec.image_h / spec.patch) * (spec.image_w / spec.patch);
  }
  int tokens() const { return patches() + (spec.use_cls ? 1 : 0); }
};

ModelParams make_vit(const VitSpec& spec, RngStream stream);

// Non-overlapping patches flattened channel-major into rows: one row per
// patch (row-major patch order), features ordered [channel][py][px]. This is
// the token matrix that graying operates on, before any projection.
Matrix tokenize(const Image& img, int patch);

Matrix layernorm(const Matrix& x, const LayerNormParams& p);
Matrix activate(const Matrix& x, Activation act);
Matrix softmax_rows(const Matrix& x);

Matrix self_attention(const Matrix& x, const AttentionParams& p);
Matrix sab_forward(const Matrix& x, const AttentionParams& p, const LayerNormParams& ln,
                   const BlockConfig& cfg);
Matrix ffn_forward(const Matrix& x, const FfnParams& p, const LayerNormParams& ln,
                   const BlockConfig& cfg);

// Projects grayed tokens, prepends the class token, adds positions.
Matrix embed_tokens(const Matrix& tokens, const ModelParams& model);
Matrix patch_embed(const Image& img, const ModelParams& model);

// The four per-layer embeddings of the standard skip ablation figure plus the
// token matrices around the SAB.
struct LayerTaps {
  Matrix sa_no_skip;   // SA transformation output
  Matrix sa_skip;      // SA output + input
  Matrix mlp_no_skip;  // MLP transformation output
  Matrix mlp_skip;     // MLP output + its input
  Matrix x_in;         // tokens entering the SAB
  Matrix x_out;        // tokens leaving the SAB (post configured skip)
};

// Runs the stacked blocks on an embedded token matrix; taps, when non-null,
// receive one record per layer regardless of the configured skips.
Matrix run_blocks(const Matrix& embedded, const ModelParams& model,
                  std::vector<LayerTaps>* taps = nullptr);

Matrix logits_from_tokens(const Matrix& block_output, const ModelParams& model);

// gray -> embed -> blocks -> final norm -> class head. One row of logits per
// image.
Matrix vit_forward(const std::vector<Image>& images, const ModelParams& model,
                   const GrayingConfig& graying);

// --- ConvMixer (depthwise + pointwise convolution block) ---

struct BatchNormParams {
  Matrix gamma, beta;               // 1 x channels
  Matrix running_mean, running_var; // 1 x channels
  double momentum = 0.1;
  double eps = 1e-5;
};

struct ConvMixerBlockParams {
  Matrix depthwise;  // channels x (k*k)
  int ksize = 3;
  Matrix pointwise;  // channels x channels
  BatchNormParams bn1, bn2;
  Activation act = Activation::Gelu;
};

struct ConvMixerSpec {
  int image_h = 32, image_w = 32, channels = 1;
  int patch = 4;
  int features = 32;
  int ksize = 3;
  int layers = 2;
  int classes = 10;
  Activation act = Activation::Gelu;
  bool skip = true;
};

struct ConvMixerParams {
  ConvMixerSpec spec;
  Matrix w_embed;  // (p*p*c) x features
  std::vector<ConvMixerBlockParams> blocks;
  Matrix w_head;  // features x classes
  Matrix b_head;  // 1 x classes

  int side() const { return spec.image_h / spec.patch; }
};

ConvMixerParams make_convmixer(const ConvMixerSpec& spec, RngStream stream);

// x holds one image as features x (side*side), spatial row-major.
Matrix depthwise_conv(const Matrix& x, const Matrix& kernels, int side, int ksize);
Matrix batchnorm_eval(const Matrix& x, const BatchNormParams& bn);

// X' = BN(act(depthwise(X))) [+ X], then X_next = BN(act(pointwise(X')))
// with no skip on the pointwise stage.
Matrix convmixer_block(const Matrix& x, const ConvMixerBlockParams& p, bool skip, int side);

Matrix convmixer_forward(const std::vector<Image>& images, const ConvMixerParams& model);

}  // namespace tg
