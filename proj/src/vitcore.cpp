#include "tokengray/vitcore.hpp"

#include <cmath>

namespace tg {

namespace {

Matrix gaussian_scaled(int rows, int cols, double std, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.raw()) v = std * rng.gaussian();
  return m;
}

LayerNormParams make_ln(int d) {
  LayerNormParams p;
  p.gamma = Matrix::filled(1, d, 1.0);
  p.beta = Matrix(1, d);
  return p;
}

}  // namespace

ModelParams make_vit(const VitSpec& spec, RngStream stream) {
  if (spec.image_h % spec.patch != 0 || spec.image_w % spec.patch != 0) {
    throw std::invalid_argument("make_vit: image size not divisible by patch size");
  }
  if (spec.dim % spec.heads != 0) {
    throw std::invalid_argument("make_vit: dim must be divisible by head count");
  }
  Rng rng(stream);
  ModelParams m;
  m.spec = spec;
  const int pdim = spec.patch * spec.patch * spec.channels;
  const int d = spec.dim;
  m.w_embed = gaussian_scaled(pdim, d, 1.0 / std::sqrt(static_cast<double>(pdim)), rng);
  m.cls = gaussian_scaled(1, d, 0.02, rng);
  // Position embeddings start at a visible scale: the toy tasks are
  // position-coded, and a near-zero init leaves token identity invisible for
  // many epochs.
  m.pos = gaussian_scaled(m.tokens(), d, 0.5, rng);
  const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
  for (int l = 0; l < spec.layers; ++l) {
    Block b;
    b.attn.w_q = gaussian_scaled(d, d, wstd, rng);
    b.attn.w_k = gaussian_scaled(d, d, wstd, rng);
    b.attn.w_v = gaussian_scaled(d, d, wstd, rng);
    b.attn.heads = spec.heads;
    b.attn.kind = spec.attention;
    b.attn.linear_scale = spec.linear_scale;
    b.ffn.w_up = gaussian_scaled(d, 4 * d, wstd, rng);
    b.ffn.w_down = gaussian_scaled(4 * d, d, 1.0 / std::sqrt(4.0 * d), rng);
    b.ffn.act = spec.ffn_act;
    b.ln1 = make_ln(d);
    b.ln2 = make_ln(d);
    b.cfg = spec.block;
    m.blocks.push_back(std::move(b));
  }
  m.ln_final = make_ln(d);
  m.w_head = gaussian_scaled(d, spec.classes, wstd, rng);
  m.b_head = Matrix(1, spec.classes);
  return m;
}

Matrix tokenize(const Image& img, int patch) {
  if (img.h % patch != 0 || img.w % patch != 0) {
    throw std::invalid_argument("tokenize: image " + std::to_string(img.h) + "x" +
                                std::to_string(img.w) + " not divisible by patch " +
                                std::to_string(patch));
  }
  const int py_count = img.h / patch;
  const int px_count = img.w / patch;
  const int pdim = patch * patch * img.c;
  Matrix tokens(py_count * px_count, pdim);
  int row = 0;
  for (int py = 0; py < py_count; ++py) {
    for (int px = 0; px < px_count; ++px, ++row) {
      int col = 0;
      for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x)
            tokens(row, col++) = img.at(ch, py * patch + y, px * patch + x);
    }
  }
  return tokens;
}

Matrix layernorm(const Matrix& x, const LayerNormParams& p) {
  const int d = x.cols();
  Matrix y(x.rows(), d);
  for (int r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += x(r, c);
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      const double t = x(r, c) - mean;
      var += t * t;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + p.eps);
    for (int c = 0; c < d; ++c)
      y(r, c) = (x(r, c) - mean) * inv * p.gamma(0, c) + p.beta(0, c);
  }
  return y;
}

Matrix activate(const Matrix& x, Activation act) {
  if (act == Activation::Linear) return x;
  Matrix y = x;
  for (double& v : y.raw()) {
    if (act == Activation::Relu) {
      v = v > 0.0 ? v : 0.0;
    } else {
      v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    }
  }
  return y;
}

Matrix softmax_rows(const Matrix& x) {
  if (!x.all_finite()) throw std::invalid_argument("softmax_rows: non-finite input");
  Matrix y(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    double mx = x(r, 0);
    for (int c = 1; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double sum = 0.0;
    for (int c = 0; c < x.cols(); ++c) {
      y(r, c) = std::exp(x(r, c) - mx);
      sum += y(r, c);
    }
    for (int c = 0; c < x.cols(); ++c) y(r, c) /= sum;
  }
  return y;
}

namespace {

Matrix slice_cols(const Matrix& x, int c0, int c1) {
  Matrix y(x.rows(), c1 - c0);
  for (int r = 0; r < x.rows(); ++r)
    for (int c = c0; c < c1; ++c) y(r, c - c0) = x(r, c);
  return y;
}

}  // namespace

Matrix self_attention(const Matrix& x, const AttentionParams& p) {
  const int d = p.w_q.rows();
  if (x.cols() != d || p.w_q.cols() != d || !p.w_k.same_shape(p.w_q) ||
      !p.w_v.same_shape(p.w_q)) {
    throw std::invalid_argument("self_attention: inconsistent shapes, x " + x.shape_str() +
                                ", w_q " + p.w_q.shape_str());
  }
  if (d % p.heads != 0) throw std::invalid_argument("self_attention: heads must divide dim");
  const int dh = d / p.heads;
  const Matrix q = matmul(x, p.w_q);
  const Matrix k = matmul(x, p.w_k);
  const Matrix v = matmul(x, p.w_v);
  Matrix out(x.rows(), d);
  for (int h = 0; h < p.heads; ++h) {
    const int c0 = h * dh, c1 = c0 + dh;
    const Matrix qh = slice_cols(q, c0, c1);
    const Matrix kh = slice_cols(k, c0, c1);
    const Matrix vh = slice_cols(v, c0, c1);
    Matrix scores = matmul(qh, kh.transpose());
    Matrix oh;
    if (p.kind == AttentionKind::Softmax) {
      scores *= 1.0 / std::sqrt(static_cast<double>(dh));
      oh = matmul(softmax_rows(scores), vh);
    } else {
      scores *= 1.0 / p.linear_scale;
      oh = matmul(scores, vh);
    }
    for (int r = 0; r < out.rows(); ++r)
      for (int c = c0; c < c1; ++c) out(r, c) = oh(r, c - c0);
  }
  return out;
}

Matrix sab_forward(const Matrix& x, const AttentionParams& p, const LayerNormParams& ln,
                   const BlockConfig& cfg) {
  const Matrix sa = self_attention(cfg.prenorm ? layernorm(x, ln) : x, p);
  return cfg.skip_sab ? sa + x : sa;
}

Matrix ffn_forward(const Matrix& x, const FfnParams& p, const LayerNormParams& ln,
                   const BlockConfig& cfg) {
  const Matrix in = cfg.prenorm ? layernorm(x, ln) : x;
  const Matrix mlp = matmul(activate(matmul(in, p.w_up), p.act), p.w_down);
  return cfg.skip_ffn ? mlp + x : mlp;
}

Matrix embed_tokens(const Matrix& tokens, const ModelParams& model) {
  Matrix z = matmul(tokens, model.w_embed);
  if (model.spec.use_cls) {
    Matrix with_cls(z.rows() + 1, z.cols());
    for (int c = 0; c < z.cols(); ++c) with_cls(0, c) = model.cls(0, c);
    for (int r = 0; r < z.rows(); ++r)
      for (int c = 0; c < z.cols(); ++c) with_cls(r + 1, c) = z(r, c);
    z = std::move(with_cls);
  }
  return z + model.pos;
}

Matrix patch_embed(const Image& img, const ModelParams& model) {
  return embed_tokens(tokenize(img, model.spec.patch), model);
}

Matrix run_blocks(const Matrix& embedded, const ModelParams& model,
                  std::vector<LayerTaps>* taps) {
  Matrix x = embedded;
  for (const Block& b : model.blocks) {
    const Matrix sa = self_attention(b.cfg.prenorm ? layernorm(x, b.ln1) : x, b.attn);
    const Matrix after_sab = b.cfg.skip_sab ? sa + x : sa;
    const Matrix ffn_in = b.cfg.prenorm ? layernorm(after_sab, b.ln2) : after_sab;
    const Matrix mlp = matmul(activate(matmul(ffn_in, b.ffn.w_up), b.ffn.act), b.ffn.w_down);
    if (taps) {
      LayerTaps t;
      t.sa_no_skip = sa;
      t.sa_skip = sa + x;
      t.mlp_no_skip = mlp;
      t.mlp_skip = mlp + after_sab;
      t.x_in = x;
      t.x_out = after_sab;
      taps->push_back(std::move(t));
    }
    x = b.cfg.skip_ffn ? mlp + after_sab : mlp;
  }
  return x;
}

Matrix logits_from_tokens(const Matrix& block_output, const ModelParams& model) {
  const Matrix normed = layernorm(block_output, model.ln_final);
  Matrix pooled(1, normed.cols());
  if (model.spec.use_cls) {
    for (int c = 0; c < normed.cols(); ++c) pooled(0, c) = normed(0, c);
  } else {
    for (int c = 0; c < normed.cols(); ++c) {
      double s = 0.0;
      for (int r = 0; r < normed.rows(); ++r) s += normed(r, c);
      pooled(0, c) = s / normed.rows();
    }
  }
  return matmul(pooled, model.w_head) + model.b_head;
}

Matrix vit_forward(const std::vector<Image>& images, const ModelParams& model,
                   const GrayingConfig& graying) {
  Matrix logits(static_cast<int>(images.size()), model.spec.classes);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Matrix tokens = apply_graying(tokenize(images[i], model.spec.patch), graying);
    const Matrix out = run_blocks(embed_tokens(tokens, model), model);
    const Matrix row = logits_from_tokens(out, model);
    for (int c = 0; c < row.cols(); ++c) logits(static_cast<int>(i), c) = row(0, c);
  }
  return logits;
}

// --- ConvMixer ---

ConvMixerParams make_convmixer(const ConvMixerSpec& spec, RngStream stream) {
  if (spec.image_h % spec.patch != 0 || spec.image_w % spec.patch != 0) {
    throw std::invalid_argument("make_convmixer: image size not divisible by patch size");
  }
  Rng rng(stream);
  ConvMixerParams m;
  m.spec = spec;
  const int pdim = spec.patch * spec.patch * spec.channels;
  const int f = spec.features;
  m.w_embed = gaussian_scaled(pdim, f, 1.0 / std::sqrt(static_cast<double>(pdim)), rng);
  auto make_bn = [&](int channels) {
    BatchNormParams bn;
    bn.gamma = Matrix::filled(1, channels, 1.0);
    bn.beta = Matrix(1, channels);
    bn.running_mean = Matrix(1, channels);
    bn.running_var = Matrix::filled(1, channels, 1.0);
    return bn;
  };
  for (int l = 0; l < spec.layers; ++l) {
    ConvMixerBlockParams b;
    b.ksize = spec.ksize;
    b.depthwise = gaussian_scaled(f, spec.ksize * spec.ksize,
                                  1.0 / static_cast<double>(spec.ksize), rng);
    b.pointwise = gaussian_scaled(f, f, 1.0 / std::sqrt(static_cast<double>(f)), rng);
    b.bn1 = make_bn(f);
    b.bn2 = make_bn(f);
    b.act = spec.act;
    m.blocks.push_back(std::move(b));
  }
  m.w_head = gaussian_scaled(f, spec.classes, 1.0 / std::sqrt(static_cast<double>(f)), rng);
  m.b_head = Matrix(1, spec.classes);
  return m;
}

Matrix depthwise_conv(const Matrix& x, const Matrix& kernels, int side, int ksize) {
  if (x.cols() != side * side) {
    throw std::invalid_argument("depthwise_conv: x cols " + std::to_string(x.cols()) +
                                " != side^2 " + std::to_string(side * side));
  }
  if (kernels.rows() != x.rows() || kernels.cols() != ksize * ksize) {
    throw std::invalid_argument("depthwise_conv: kernel shape " + kernels.shape_str() +
                                " inconsistent with channels " + std::to_string(x.rows()));
  }
  const int off = ksize / 2;
  Matrix y(x.rows(), x.cols());
  for (int ch = 0; ch < x.rows(); ++ch) {
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        double s = 0.0;
        for (int dr = 0; dr < ksize; ++dr) {
          const int rr = r + dr - off;
          if (rr < 0 || rr >= side) continue;
          for (int dc = 0; dc < ksize; ++dc) {
            const int cc = c + dc - off;
            if (cc < 0 || cc >= side) continue;
            s += kernels(ch, dr * ksize + dc) * x(ch, rr * side + cc);
          }
        }
        y(ch, r * side + c) = s;
      }
    }
  }
  return y;
}

Matrix batchnorm_eval(const Matrix& x, const BatchNormParams& bn) {
  Matrix y(x.rows(), x.cols());
  for (int ch = 0; ch < x.rows(); ++ch) {
    const double inv = 1.0 / std::sqrt(bn.running_var(0, ch) + bn.eps);
    for (int c = 0; c < x.cols(); ++c)
      y(ch, c) = (x(ch, c) - bn.running_mean(0, ch)) * inv * bn.gamma(0, ch) + bn.beta(0, ch);
  }
  return y;
}

Matrix convmixer_block(const Matrix& x, const ConvMixerBlockParams& p, bool skip, int side) {
  Matrix dw = batchnorm_eval(activate(depthwise_conv(x, p.depthwise, side, p.ksize), p.act),
                             p.bn1);
  const Matrix mixed = skip ? dw + x : dw;
  return batchnorm_eval(activate(matmul(p.pointwise, mixed), p.act), p.bn2);
}

Matrix convmixer_forward(const std::vector<Image>& images, const ConvMixerParams& model) {
  const int side = model.side();
  Matrix logits(static_cast<int>(images.size()), model.spec.classes);
  for (std::size_t i = 0; i < images.size(); ++i) {
    // Patch embedding: tokens are patches, features become channels.
    const Matrix tokens = tokenize(images[i], model.spec.patch);   // (side*side) x pdim
    Matrix x = matmul(tokens, model.w_embed).transpose();          // features x (side*side)
    for (const auto& b : model.blocks) x = convmixer_block(x, b, model.spec.skip, side);
    Matrix pooled(1, x.rows());
    for (int ch = 0; ch < x.rows(); ++ch) {
      double s = 0.0;
      for (int c = 0; c < x.cols(); ++c) s += x(ch, c);
      pooled(0, ch) = s / x.cols();
    }
    const Matrix row = matmul(pooled, model.w_head) + model.b_head;
    for (int c = 0; c < row.cols(); ++c) logits(static_cast<int>(i), c) = row(0, c);
  }
  return logits;
}

}  // namespace tg
