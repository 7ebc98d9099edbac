#include "tokengray/autodiff.hpp"

#include <cmath>

namespace tg::ad {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("Tape: " + msg);
}

double gelu_fwd(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

double gelu_deriv(double v) {
  return 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))) +
         v * std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
}

}  // namespace

Var Tape::push(Matrix val, std::function<void(Tape&, int)> back) {
  nodes_.push_back(Node{std::move(val), Matrix(), std::move(back)});
  return Var{static_cast<int>(nodes_.size()) - 1, epoch_};
}

Var Tape::input(Matrix value) { return push(std::move(value), nullptr); }

void Tape::reset() {
  nodes_.clear();
  ++epoch_;
}

Var Tape::add(Var a, Var b) {
  const int ia = check(a), ib = check(b);
  require(val_ref(ia).same_shape(val_ref(ib)), "add: shape mismatch");
  return push(val_ref(ia) + val_ref(ib), [ia, ib](Tape& t, int self) {
    t.grad_ref(ia) += t.grad_ref(self);
    t.grad_ref(ib) += t.grad_ref(self);
  });
}

Var Tape::sub(Var a, Var b) {
  const int ia = check(a), ib = check(b);
  require(val_ref(ia).same_shape(val_ref(ib)), "sub: shape mismatch");
  return push(val_ref(ia) - val_ref(ib), [ia, ib](Tape& t, int self) {
    t.grad_ref(ia) += t.grad_ref(self);
    t.grad_ref(ib) -= t.grad_ref(self);
  });
}

Var Tape::mul(Var a, Var b) {
  const int ia = check(a), ib = check(b);
  require(val_ref(ia).same_shape(val_ref(ib)), "mul: shape mismatch");
  Matrix out = val_ref(ia);
  for (std::size_t i = 0; i < out.size(); ++i) out.raw()[i] *= val_ref(ib).raw()[i];
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    for (std::size_t i = 0; i < g.size(); ++i) {
      t.grad_ref(ia).raw()[i] += g.raw()[i] * t.val_ref(ib).raw()[i];
      t.grad_ref(ib).raw()[i] += g.raw()[i] * t.val_ref(ia).raw()[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  const int ia = check(a);
  return push(val_ref(ia) * c, [ia, c](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    for (std::size_t i = 0; i < g.size(); ++i) t.grad_ref(ia).raw()[i] += c * g.raw()[i];
  });
}

Var Tape::matmul(Var a, Var b) {
  const int ia = check(a), ib = check(b);
  require(val_ref(ia).cols() == val_ref(ib).rows(), "matmul: inner dimensions differ");
  return push(tg::matmul(val_ref(ia), val_ref(ib)), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    t.grad_ref(ia) += tg::matmul(g, t.val_ref(ib).transpose());
    t.grad_ref(ib) += tg::matmul(t.val_ref(ia).transpose(), g);
  });
}

Var Tape::transpose(Var a) {
  const int ia = check(a);
  return push(val_ref(ia).transpose(), [ia](Tape& t, int self) {
    t.grad_ref(ia) += t.grad_ref(self).transpose();
  });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const int ia = check(a);
  require(0 <= c0 && c0 < c1 && c1 <= val_ref(ia).cols(), "slice_cols: bad range");
  const Matrix& x = val_ref(ia);
  Matrix out(x.rows(), c1 - c0);
  for (int r = 0; r < x.rows(); ++r)
    for (int c = c0; c < c1; ++c) out(r, c - c0) = x(r, c);
  return push(std::move(out), [ia, c0, c1](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    Matrix& ga = t.grad_ref(ia);
    for (int r = 0; r < g.rows(); ++r)
      for (int c = c0; c < c1; ++c) ga(r, c) += g(r, c - c0);
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: empty");
  std::vector<int> ids;
  int cols = 0;
  const int rows = val_ref(check(parts[0])).rows();
  for (Var p : parts) {
    const int id = check(p);
    require(val_ref(id).rows() == rows, "concat_cols: row mismatch");
    ids.push_back(id);
    cols += val_ref(id).cols();
  }
  Matrix out(rows, cols);
  int base = 0;
  for (int id : ids) {
    const Matrix& x = val_ref(id);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < x.cols(); ++c) out(r, base + c) = x(r, c);
    base += x.cols();
  }
  return push(std::move(out), [ids](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    int base = 0;
    for (int id : ids) {
      Matrix& ga = t.grad_ref(id);
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < ga.cols(); ++c) ga(r, c) += g(r, base + c);
      base += ga.cols();
    }
  });
}

Var Tape::stack_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "stack_rows: empty");
  std::vector<int> ids;
  int rows = 0;
  const int cols = val_ref(check(parts[0])).cols();
  for (Var p : parts) {
    const int id = check(p);
    require(val_ref(id).cols() == cols, "stack_rows: column mismatch");
    ids.push_back(id);
    rows += val_ref(id).rows();
  }
  Matrix out(rows, cols);
  int base = 0;
  for (int id : ids) {
    const Matrix& x = val_ref(id);
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 0; c < cols; ++c) out(base + r, c) = x(r, c);
    base += x.rows();
  }
  return push(std::move(out), [ids](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    int base = 0;
    for (int id : ids) {
      Matrix& ga = t.grad_ref(id);
      for (int r = 0; r < ga.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) ga(r, c) += g(base + r, c);
      base += ga.rows();
    }
  });
}

Var Tape::row(Var a, int r) {
  const int ia = check(a);
  require(0 <= r && r < val_ref(ia).rows(), "row: index out of range");
  const Matrix& x = val_ref(ia);
  Matrix out(1, x.cols());
  for (int c = 0; c < x.cols(); ++c) out(0, c) = x(r, c);
  return push(std::move(out), [ia, r](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    for (int c = 0; c < g.cols(); ++c) t.grad_ref(ia)(r, c) += g(0, c);
  });
}

Var Tape::add_broadcast_row(Var x, Var rowvec) {
  const int ix = check(x), iv = check(rowvec);
  require(val_ref(iv).rows() == 1 && val_ref(iv).cols() == val_ref(ix).cols(),
          "add_broadcast_row: vector shape mismatch");
  Matrix out = val_ref(ix);
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) += val_ref(iv)(0, c);
  return push(std::move(out), [ix, iv](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    t.grad_ref(ix) += g;
    Matrix& gv = t.grad_ref(iv);
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c) gv(0, c) += g(r, c);
  });
}

Var Tape::softmax_rows(Var a) {
  const int ia = check(a);
  require(val_ref(ia).all_finite(), "softmax_rows: non-finite input");
  Matrix y = tg::softmax_rows(val_ref(ia));
  return push(std::move(y), [ia](Tape& t, int self) {
    const Matrix& y = t.val_ref(self);
    const Matrix& g = t.grad_ref(self);
    Matrix& ga = t.grad_ref(ia);
    for (int r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (int c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (int c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var Tape::layernorm(Var x, Var gamma, Var beta, double eps) {
  const int ix = check(x), ig = check(gamma), ib = check(beta);
  const Matrix& xv = val_ref(ix);
  const int d = xv.cols();
  require(val_ref(ig).rows() == 1 && val_ref(ig).cols() == d, "layernorm: gamma shape");
  require(val_ref(ib).rows() == 1 && val_ref(ib).cols() == d, "layernorm: beta shape");
  Matrix out(xv.rows(), d);
  for (int r = 0; r < xv.rows(); ++r) {
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += xv(r, c);
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < d; ++c)
      out(r, c) = (xv(r, c) - mean) * inv * val_ref(ig)(0, c) + val_ref(ib)(0, c);
  }
  return push(std::move(out), [ix, ig, ib, eps](Tape& t, int self) {
    const Matrix& x = t.val_ref(ix);
    const Matrix& gamma = t.val_ref(ig);
    const Matrix& g = t.grad_ref(self);
    Matrix& gx = t.grad_ref(ix);
    Matrix& gg = t.grad_ref(ig);
    Matrix& gb = t.grad_ref(ib);
    const int d = x.cols();
    for (int r = 0; r < x.rows(); ++r) {
      double mean = 0.0;
      for (int c = 0; c < d; ++c) mean += x(r, c);
      mean /= d;
      double var = 0.0;
      for (int c = 0; c < d; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
      var /= d;
      const double inv = 1.0 / std::sqrt(var + eps);
      // dL/dxhat, plus the two reduction terms of the standard layernorm VJP.
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int c = 0; c < d; ++c) {
        const double xhat = (x(r, c) - mean) * inv;
        const double dxhat = g(r, c) * gamma(0, c);
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        gg(0, c) += g(r, c) * xhat;
        gb(0, c) += g(r, c);
      }
      for (int c = 0; c < d; ++c) {
        const double xhat = (x(r, c) - mean) * inv;
        const double dxhat = g(r, c) * gamma(0, c);
        gx(r, c) += inv * (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d);
      }
    }
  });
}

Var Tape::gelu(Var a) {
  const int ia = check(a);
  Matrix out = val_ref(ia);
  for (double& v : out.raw()) v = gelu_fwd(v);
  return push(std::move(out), [ia](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    const Matrix& x = t.val_ref(ia);
    Matrix& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.raw()[i] += g.raw()[i] * gelu_deriv(x.raw()[i]);
  });
}

Var Tape::relu(Var a) {
  const int ia = check(a);
  Matrix out = val_ref(ia);
  for (double& v : out.raw()) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), [ia](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    const Matrix& x = t.val_ref(ia);
    Matrix& ga = t.grad_ref(ia);
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.raw()[i] > 0.0) ga.raw()[i] += g.raw()[i];
  });
}

Var Tape::pow_elem(Var a, double p) {
  const int ia = check(a);
  Matrix out = val_ref(ia);
  for (double& v : out.raw()) v = std::pow(v, p);
  return push(std::move(out), [ia, p](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    const Matrix& x = t.val_ref(ia);
    Matrix& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.raw()[i] += g.raw()[i] * p * std::pow(x.raw()[i], p - 1.0);
  });
}

Var Tape::sum(Var a) {
  const int ia = check(a);
  double s = 0.0;
  for (double v : val_ref(ia).raw()) s += v;
  return push(Matrix(1, 1, {s}), [ia](Tape& t, int self) {
    const double g = t.grad_ref(self)(0, 0);
    for (double& v : t.grad_ref(ia).raw()) v += g;
  });
}

Var Tape::mean_group_cols(Var x, int groups) {
  const int ix = check(x);
  const Matrix& xv = val_ref(ix);
  require(groups >= 1 && xv.cols() % groups == 0, "mean_group_cols: groups must divide cols");
  const int gs = xv.cols() / groups;
  Matrix out(xv.rows(), groups);
  for (int r = 0; r < xv.rows(); ++r)
    for (int g = 0; g < groups; ++g) {
      double s = 0.0;
      for (int c = 0; c < gs; ++c) s += xv(r, g * gs + c);
      out(r, g) = s / gs;
    }
  return push(std::move(out), [ix, gs](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    Matrix& gx = t.grad_ref(ix);
    for (int r = 0; r < g.rows(); ++r)
      for (int grp = 0; grp < g.cols(); ++grp)
        for (int c = 0; c < gs; ++c) gx(r, grp * gs + c) += g(r, grp) / gs;
  });
}

Var Tape::depthwise_conv(Var x, Var kernels, int batch, int side, int ksize) {
  const int ix = check(x), ik = check(kernels);
  const Matrix& xv = val_ref(ix);
  require(xv.cols() == batch * side * side, "depthwise_conv: cols != batch*side^2");
  require(val_ref(ik).rows() == xv.rows() && val_ref(ik).cols() == ksize * ksize,
          "depthwise_conv: kernel shape mismatch");
  const int off = ksize / 2;
  const int sp = side * side;
  Matrix out(xv.rows(), xv.cols());
  const Matrix& kv = val_ref(ik);
  for (int ch = 0; ch < xv.rows(); ++ch)
    for (int b = 0; b < batch; ++b)
      for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
          double s = 0.0;
          for (int dr = 0; dr < ksize; ++dr) {
            const int rr = r + dr - off;
            if (rr < 0 || rr >= side) continue;
            for (int dc = 0; dc < ksize; ++dc) {
              const int cc = c + dc - off;
              if (cc < 0 || cc >= side) continue;
              s += kv(ch, dr * ksize + dc) * xv(ch, b * sp + rr * side + cc);
            }
          }
          out(ch, b * sp + r * side + c) = s;
        }
  return push(std::move(out), [ix, ik, batch, side, ksize](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    const Matrix& xv = t.val_ref(ix);
    const Matrix& kv = t.val_ref(ik);
    Matrix& gx = t.grad_ref(ix);
    Matrix& gk = t.grad_ref(ik);
    const int off = ksize / 2;
    const int sp = side * side;
    for (int ch = 0; ch < xv.rows(); ++ch)
      for (int b = 0; b < batch; ++b)
        for (int r = 0; r < side; ++r)
          for (int c = 0; c < side; ++c) {
            const double gv = g(ch, b * sp + r * side + c);
            if (gv == 0.0) continue;
            for (int dr = 0; dr < ksize; ++dr) {
              const int rr = r + dr - off;
              if (rr < 0 || rr >= side) continue;
              for (int dc = 0; dc < ksize; ++dc) {
                const int cc = c + dc - off;
                if (cc < 0 || cc >= side) continue;
                gx(ch, b * sp + rr * side + cc) += gv * kv(ch, dr * ksize + dc);
                gk(ch, dr * ksize + dc) += gv * xv(ch, b * sp + rr * side + cc);
              }
            }
          }
  });
}

Var Tape::batchnorm_train(Var x, Var gamma, Var beta, BatchNormState& state) {
  const int ix = check(x), ig = check(gamma), ib = check(beta);
  const Matrix& xv = val_ref(ix);
  const int channels = xv.rows();
  const int n = xv.cols();
  require(val_ref(ig).cols() == channels && val_ref(ib).cols() == channels,
          "batchnorm_train: affine shape mismatch");
  std::vector<double> mean(channels), var(channels);
  for (int ch = 0; ch < channels; ++ch) {
    double m = 0.0;
    for (int c = 0; c < n; ++c) m += xv(ch, c);
    m /= n;
    double v = 0.0;
    for (int c = 0; c < n; ++c) v += (xv(ch, c) - m) * (xv(ch, c) - m);
    v /= n;
    mean[ch] = m;
    var[ch] = v;
    state.mean(0, ch) = (1.0 - state.momentum) * state.mean(0, ch) + state.momentum * m;
    state.var(0, ch) = (1.0 - state.momentum) * state.var(0, ch) + state.momentum * v;
  }
  const double eps = state.eps;
  Matrix out(channels, n);
  for (int ch = 0; ch < channels; ++ch) {
    const double inv = 1.0 / std::sqrt(var[ch] + eps);
    for (int c = 0; c < n; ++c)
      out(ch, c) = (xv(ch, c) - mean[ch]) * inv * val_ref(ig)(0, ch) + val_ref(ib)(0, ch);
  }
  return push(std::move(out), [ix, ig, ib, mean, var, eps](Tape& t, int self) {
    const Matrix& x = t.val_ref(ix);
    const Matrix& gamma = t.val_ref(ig);
    const Matrix& g = t.grad_ref(self);
    Matrix& gx = t.grad_ref(ix);
    Matrix& gg = t.grad_ref(ig);
    Matrix& gb = t.grad_ref(ib);
    const int n = x.cols();
    for (int ch = 0; ch < x.rows(); ++ch) {
      const double inv = 1.0 / std::sqrt(var[ch] + eps);
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int c = 0; c < n; ++c) {
        const double xhat = (x(ch, c) - mean[ch]) * inv;
        const double dxhat = g(ch, c) * gamma(0, ch);
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        gg(0, ch) += g(ch, c) * xhat;
        gb(0, ch) += g(ch, c);
      }
      for (int c = 0; c < n; ++c) {
        const double xhat = (x(ch, c) - mean[ch]) * inv;
        const double dxhat = g(ch, c) * gamma(0, ch);
        gx(ch, c) += inv * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
      }
    }
  });
}

Var Tape::batchnorm_eval(Var x, Var gamma, Var beta, const BatchNormState& state) {
  const int ix = check(x), ig = check(gamma), ib = check(beta);
  const Matrix& xv = val_ref(ix);
  const int channels = xv.rows();
  const Matrix rm = state.mean, rv = state.var;
  const double eps = state.eps;
  Matrix out(channels, xv.cols());
  for (int ch = 0; ch < channels; ++ch) {
    const double inv = 1.0 / std::sqrt(rv(0, ch) + eps);
    for (int c = 0; c < xv.cols(); ++c)
      out(ch, c) = (xv(ch, c) - rm(0, ch)) * inv * val_ref(ig)(0, ch) + val_ref(ib)(0, ch);
  }
  return push(std::move(out), [ix, ig, ib, rm, rv, eps](Tape& t, int self) {
    const Matrix& x = t.val_ref(ix);
    const Matrix& gamma = t.val_ref(ig);
    const Matrix& g = t.grad_ref(self);
    Matrix& gx = t.grad_ref(ix);
    Matrix& gg = t.grad_ref(ig);
    Matrix& gb = t.grad_ref(ib);
    for (int ch = 0; ch < x.rows(); ++ch) {
      const double inv = 1.0 / std::sqrt(rv(0, ch) + eps);
      for (int c = 0; c < x.cols(); ++c) {
        gx(ch, c) += g(ch, c) * gamma(0, ch) * inv;
        gg(0, ch) += g(ch, c) * (x(ch, c) - rm(0, ch)) * inv;
        gb(0, ch) += g(ch, c);
      }
    }
  });
}

Var Tape::cross_entropy(Var logits, std::vector<int> labels) {
  const int il = check(logits);
  const Matrix& lv = val_ref(il);
  require(static_cast<int>(labels.size()) == lv.rows(), "cross_entropy: label count mismatch");
  for (int y : labels)
    require(0 <= y && y < lv.cols(), "cross_entropy: label out of range");
  const Matrix probs = tg::softmax_rows(lv);
  double loss = 0.0;
  for (int r = 0; r < lv.rows(); ++r) loss -= std::log(std::max(probs(r, labels[r]), 1e-300));
  loss /= lv.rows();
  return push(Matrix(1, 1, {loss}), [il, labels = std::move(labels), probs](Tape& t, int self) {
    const double g = t.grad_ref(self)(0, 0);
    Matrix& gl = t.grad_ref(il);
    const int b = gl.rows();
    for (int r = 0; r < b; ++r)
      for (int c = 0; c < gl.cols(); ++c)
        gl(r, c) += g * (probs(r, c) - (c == labels[r] ? 1.0 : 0.0)) / b;
  });
}

Var Tape::mse(Var pred, Matrix target) {
  const int ip = check(pred);
  require(val_ref(ip).same_shape(target), "mse: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = val_ref(ip).raw()[i] - target.raw()[i];
    s += d * d;
  }
  s /= static_cast<double>(target.size());
  return push(Matrix(1, 1, {s}), [ip, target = std::move(target)](Tape& t, int self) {
    const double g = t.grad_ref(self)(0, 0);
    Matrix& gp = t.grad_ref(ip);
    const double scale = 2.0 * g / static_cast<double>(target.size());
    for (std::size_t i = 0; i < target.size(); ++i)
      gp.raw()[i] += scale * (t.val_ref(ip).raw()[i] - target.raw()[i]);
  });
}

void Tape::backward(Var output) {
  const int io = check(output);
  require(val_ref(io).rows() == 1 && val_ref(io).cols() == 1,
          "backward: output must be scalar; use backward_seed otherwise");
  backward_seed(output, Matrix(1, 1, {1.0}));
}

void Tape::backward_seed(Var output, const Matrix& seed) {
  const int io = check(output);
  require(val_ref(io).same_shape(seed), "backward_seed: seed shape mismatch");
  for (int i = 0; i <= io; ++i)
    nodes_[i].grad = Matrix(nodes_[i].val.rows(), nodes_[i].val.cols());
  nodes_[io].grad = seed;
  for (int i = io; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back(*this, i);
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double step) {
  Tape tape;
  Var xv = tape.input(x);
  Var y = f(tape, xv);
  if (tape.value(y).rows() != 1 || tape.value(y).cols() != 1) {
    throw std::invalid_argument("grad_check: function output must be scalar");
  }
  tape.backward(y);
  const Matrix analytic = tape.grad(xv);

  auto eval = [&](const Matrix& at) {
    Tape t2;
    Var v = t2.input(at);
    return t2.value(f(t2, v))(0, 0);
  };

  double max_rel = 0.0;
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.raw()[i];
    probe.raw()[i] = orig + step;
    const double fp = eval(probe);
    probe.raw()[i] = orig - step;
    const double fm = eval(probe);
    probe.raw()[i] = orig;
    const double fd = (fp - fm) / (2.0 * step);
    const double a = analytic.raw()[i];
    const double rel = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

Matrix jacobian(const std::function<Var(Tape&, Var)>& f, const Matrix& x,
                std::size_t entry_budget) {
  Tape tape;
  Var xv = tape.input(x);
  Var y = f(tape, xv);
  const Matrix& out = tape.value(y);
  const std::size_t n_out = out.size();
  const std::size_t n_in = x.size();
  if (n_out * n_in > entry_budget) {
    throw std::invalid_argument("jacobian: " + std::to_string(n_out * n_in) +
                                " entries exceed budget of " + std::to_string(entry_budget));
  }
  Matrix jac(static_cast<int>(n_out), static_cast<int>(n_in));
  Matrix seed(out.rows(), out.cols());
  for (std::size_t i = 0; i < n_out; ++i) {
    seed.raw()[i] = 1.0;
    tape.backward_seed(y, seed);
    seed.raw()[i] = 0.0;
    const Matrix& gx = tape.grad(xv);
    for (std::size_t j = 0; j < n_in; ++j) jac(static_cast<int>(i), static_cast<int>(j)) = gx.raw()[j];
  }
  return jac;
}

}  // namespace tg::ad
