#pragma once

#include <functional>
#include <vector>

#include "tokengray/matrix.hpp"
#include "tokengray/vitcore.hpp"

namespace tg::ad {

class Tape;

// Handle into a tape. The epoch guards against use after reset().
struct Var {
  int id = -1;
  int epoch = -1;
};

// Running statistics updated by batchnorm in training mode.
struct BatchNormState {
  Matrix mean;  // 1 x channels
  Matrix var;   // 1 x channels
  double momentum = 0.1;
  double eps = 1e-5;
};

// Eager reverse-mode tape over Matrix values. Forward values are computed at
// record time; backward() replays the nodes in strict reverse order.
// Gradients accumulate in f64. One tape per thread.
class Tape {
 public:
  Var input(Matrix value);

  const Matrix& value(Var v) const { return nodes_[check(v)].val; }
  const Matrix& grad(Var v) const { return nodes_[check(v)].grad; }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var slice_cols(Var a, int c0, int c1);
  Var concat_cols(const std::vector<Var>& parts);
  Var stack_rows(const std::vector<Var>& parts);
  Var row(Var a, int r);
  Var add_broadcast_row(Var x, Var rowvec);  // adds a 1 x d vector to every row
  Var softmax_rows(Var a);
  Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-6);
  Var gelu(Var a);
  Var relu(Var a);
  Var pow_elem(Var a, double p);  // documented smooth away from 0 for p < 1
  Var sum(Var a);                 // 1x1
  Var mean_group_cols(Var x, int groups);  // mean over contiguous column groups
  Var depthwise_conv(Var x, Var kernels, int batch, int side, int ksize);
  Var batchnorm_train(Var x, Var gamma, Var beta, BatchNormState& state);
  Var batchnorm_eval(Var x, Var gamma, Var beta, const BatchNormState& state);
  Var cross_entropy(Var logits, std::vector<int> labels);  // mean over rows, 1x1
  Var mse(Var pred, Matrix target);                        // mean squared error, 1x1

  // Seeds the output gradient and walks the tape backwards. Gradients of all
  // nodes are zeroed first, so repeated calls are independent.
  void backward(Var output);                      // scalar output, seed 1
  void backward_seed(Var output, const Matrix& seed);

  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix val;
    Matrix grad;
    std::function<void(Tape&, int)> back;  // empty for leaves
  };

  int check(Var v) const {
    if (v.id < 0 || v.epoch != epoch_ || v.id >= static_cast<int>(nodes_.size())) {
      throw std::logic_error("Tape: use of a node after tape reset (or invalid handle)");
    }
    return v.id;
  }

  Var push(Matrix val, std::function<void(Tape&, int)> back);
  Matrix& grad_ref(int id) { return nodes_[id].grad; }
  const Matrix& val_ref(int id) const { return nodes_[id].val; }

  std::vector<Node> nodes_;
  int epoch_ = 0;

  friend struct NodeOps;
};

// Max relative error between the tape gradient of a scalar function and
// central finite differences, entrywise.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double step = 1e-5);

// Exact Jacobian (flattened output dim x flattened input dim), assembled by
// repeated vector-Jacobian products with basis covectors.
Matrix jacobian(const std::function<Var(Tape&, Var)>& f, const Matrix& x,
                std::size_t entry_budget = 10'000'000);

}  // namespace tg::ad
