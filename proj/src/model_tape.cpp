#include "tokengray/model_tape.hpp"

#include <cmath>

namespace tg {

namespace {

// One traversal implementation shared by const and mutable visitors.
template <typename Model, typename Fn>
void visit_vit(Model& m, Fn&& fn) {
  fn("w_embed", m.w_embed);
  if (m.spec.use_cls) fn("cls", m.cls);
  fn("pos", m.pos);
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    auto& b = m.blocks[l];
    fn(p + "w_q", b.attn.w_q);
    fn(p + "w_k", b.attn.w_k);
    fn(p + "w_v", b.attn.w_v);
    fn(p + "w_up", b.ffn.w_up);
    fn(p + "w_down", b.ffn.w_down);
    fn(p + "ln1.gamma", b.ln1.gamma);
    fn(p + "ln1.beta", b.ln1.beta);
    fn(p + "ln2.gamma", b.ln2.gamma);
    fn(p + "ln2.beta", b.ln2.beta);
  }
  fn("ln_final.gamma", m.ln_final.gamma);
  fn("ln_final.beta", m.ln_final.beta);
  fn("w_head", m.w_head);
  fn("b_head", m.b_head);
}

template <typename Model, typename Fn>
void visit_convmixer(Model& m, Fn&& fn) {
  fn("w_embed", m.w_embed);
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    auto& b = m.blocks[l];
    fn(p + "depthwise", b.depthwise);
    fn(p + "pointwise", b.pointwise);
    fn(p + "bn1.gamma", b.bn1.gamma);
    fn(p + "bn1.beta", b.bn1.beta);
    fn(p + "bn2.gamma", b.bn2.gamma);
    fn(p + "bn2.beta", b.bn2.beta);
  }
  fn("w_head", m.w_head);
  fn("b_head", m.b_head);
}

}  // namespace

void for_each_param(ModelParams& m, const ParamVisitor& fn) { visit_vit(m, fn); }
void for_each_param(const ModelParams& m, const ConstParamVisitor& fn) { visit_vit(m, fn); }
void for_each_param(ConvMixerParams& m, const ParamVisitor& fn) { visit_convmixer(m, fn); }
void for_each_param(const ConvMixerParams& m, const ConstParamVisitor& fn) {
  visit_convmixer(m, fn);
}

VitBinder bind_vit(ad::Tape& tape, const ModelParams& model) {
  VitBinder b;
  for_each_param(model, [&](const std::string& name, const Matrix& value) {
    b.names.push_back(name);
    b.vars.push_back(tape.input(value));
  });
  return b;
}

namespace {

struct VarLookup {
  const std::vector<std::string>* names;
  const std::vector<ad::Var>* vars;
  ad::Var operator()(const std::string& name) const {
    for (std::size_t i = 0; i < names->size(); ++i)
      if ((*names)[i] == name) return (*vars)[i];
    throw std::logic_error("binder: unknown parameter " + name);
  }
};

ad::Var attention_tape(ad::Tape& t, ad::Var x, ad::Var wq, ad::Var wk, ad::Var wv,
                       const AttentionParams& shape) {
  const int d = shape.w_q.rows();
  const int dh = d / shape.heads;
  ad::Var q = t.matmul(x, wq);
  ad::Var k = t.matmul(x, wk);
  ad::Var v = t.matmul(x, wv);
  std::vector<ad::Var> heads;
  for (int h = 0; h < shape.heads; ++h) {
    const int c0 = h * dh, c1 = c0 + dh;
    ad::Var qh = t.slice_cols(q, c0, c1);
    ad::Var kh = t.slice_cols(k, c0, c1);
    ad::Var vh = t.slice_cols(v, c0, c1);
    ad::Var scores = t.matmul(qh, t.transpose(kh));
    if (shape.kind == AttentionKind::Softmax) {
      scores = t.scale(scores, 1.0 / std::sqrt(static_cast<double>(dh)));
      heads.push_back(t.matmul(t.softmax_rows(scores), vh));
    } else {
      scores = t.scale(scores, 1.0 / shape.linear_scale);
      heads.push_back(t.matmul(scores, vh));
    }
  }
  return shape.heads == 1 ? heads[0] : t.concat_cols(heads);
}

ad::Var activate_tape(ad::Tape& t, ad::Var x, Activation act) {
  switch (act) {
    case Activation::Linear:
      return x;
    case Activation::Relu:
      return t.relu(x);
    case Activation::Gelu:
      return t.gelu(x);
  }
  throw std::logic_error("activate_tape: unknown activation");
}

}  // namespace

ad::Var vit_logits_tape(ad::Tape& t, const VitBinder& binder, const ModelParams& model,
                        const Matrix& tokens) {
  VarLookup look{&binder.names, &binder.vars};
  ad::Var x = t.matmul(t.input(tokens), look("w_embed"));
  if (model.spec.use_cls) x = t.stack_rows({look("cls"), x});
  x = t.add(x, look("pos"));
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    const Block& b = model.blocks[l];
    ad::Var sab_in = x;
    if (b.cfg.prenorm)
      sab_in = t.layernorm(x, look(p + "ln1.gamma"), look(p + "ln1.beta"), b.ln1.eps);
    ad::Var sa = attention_tape(t, sab_in, look(p + "w_q"), look(p + "w_k"), look(p + "w_v"),
                                b.attn);
    ad::Var after_sab = b.cfg.skip_sab ? t.add(sa, x) : sa;
    ad::Var ffn_in = after_sab;
    if (b.cfg.prenorm)
      ffn_in = t.layernorm(after_sab, look(p + "ln2.gamma"), look(p + "ln2.beta"), b.ln2.eps);
    ad::Var mlp = t.matmul(activate_tape(t, t.matmul(ffn_in, look(p + "w_up")), b.ffn.act),
                           look(p + "w_down"));
    x = b.cfg.skip_ffn ? t.add(mlp, after_sab) : mlp;
  }
  x = t.layernorm(x, look("ln_final.gamma"), look("ln_final.beta"), model.ln_final.eps);
  ad::Var pooled = model.spec.use_cls ? t.row(x, 0)
                                      : t.scale(t.mean_group_cols(t.transpose(x), 1), 1.0);
  if (!model.spec.use_cls) pooled = t.transpose(pooled);
  return t.add(t.matmul(pooled, look("w_head")), look("b_head"));
}

void accumulate_grads(const ad::Tape& tape, const VitBinder& binder, ModelParams& grads) {
  std::size_t i = 0;
  for_each_param(grads, [&](const std::string&, Matrix& g) {
    g += tape.grad(binder.vars[i]);
    ++i;
  });
}

ConvMixerBinder bind_convmixer(ad::Tape& tape, const ConvMixerParams& model) {
  ConvMixerBinder b;
  for_each_param(model, [&](const std::string& name, const Matrix& value) {
    b.names.push_back(name);
    b.vars.push_back(tape.input(value));
  });
  return b;
}

std::vector<ad::BatchNormState> make_bn_state(const ConvMixerParams& model) {
  std::vector<ad::BatchNormState> state;
  for (const auto& blk : model.blocks) {
    for (const BatchNormParams* bn : {&blk.bn1, &blk.bn2}) {
      ad::BatchNormState s;
      s.mean = bn->running_mean;
      s.var = bn->running_var;
      s.momentum = bn->momentum;
      s.eps = bn->eps;
      state.push_back(std::move(s));
    }
  }
  return state;
}

ad::Var convmixer_logits_tape(ad::Tape& t, const ConvMixerBinder& binder,
                              const ConvMixerParams& model,
                              const std::vector<Matrix>& token_batch,
                              std::vector<ad::BatchNormState>& bn_state, bool training) {
  VarLookup look{&binder.names, &binder.vars};
  const int side = model.side();
  const int batch = static_cast<int>(token_batch.size());
  // Stack all images column-wise: features x (batch * side^2).
  std::vector<ad::Var> embedded;
  embedded.reserve(token_batch.size());
  for (const Matrix& tokens : token_batch)
    embedded.push_back(t.transpose(t.matmul(t.input(tokens), look("w_embed"))));
  ad::Var x = batch == 1 ? embedded[0] : t.concat_cols(embedded);
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    const auto& blk = model.blocks[l];
    ad::Var dw = t.depthwise_conv(x, look(p + "depthwise"), batch, side, blk.ksize);
    dw = activate_tape(t, dw, blk.act);
    ad::Var bn1 = training
                      ? t.batchnorm_train(dw, look(p + "bn1.gamma"), look(p + "bn1.beta"),
                                          bn_state[2 * l])
                      : t.batchnorm_eval(dw, look(p + "bn1.gamma"), look(p + "bn1.beta"),
                                         bn_state[2 * l]);
    ad::Var mixed = model.spec.skip ? t.add(bn1, x) : bn1;
    ad::Var pw = activate_tape(t, t.matmul(look(p + "pointwise"), mixed), blk.act);
    x = training ? t.batchnorm_train(pw, look(p + "bn2.gamma"), look(p + "bn2.beta"),
                                     bn_state[2 * l + 1])
                 : t.batchnorm_eval(pw, look(p + "bn2.gamma"), look(p + "bn2.beta"),
                                    bn_state[2 * l + 1]);
  }
  // Global average pool per image, then the linear head.
  ad::Var pooled = t.mean_group_cols(x, batch);       // features x batch
  ad::Var logits = t.matmul(t.transpose(pooled), look("w_head"));  // batch x classes
  return t.add_broadcast_row(logits, look("b_head"));
}

void accumulate_grads(const ad::Tape& tape, const ConvMixerBinder& binder,
                      ConvMixerParams& grads) {
  std::size_t i = 0;
  for_each_param(grads, [&](const std::string&, Matrix& g) {
    g += tape.grad(binder.vars[i]);
    ++i;
  });
}

ad::Var sab_tape(ad::Tape& t, ad::Var xv, const Block& block) {
  ad::Var in = xv;
  if (block.cfg.prenorm)
    in = t.layernorm(xv, t.input(block.ln1.gamma), t.input(block.ln1.beta), block.ln1.eps);
  ad::Var sa = attention_tape(t, in, t.input(block.attn.w_q), t.input(block.attn.w_k),
                              t.input(block.attn.w_v), block.attn);
  return block.cfg.skip_sab ? t.add(sa, xv) : sa;
}

}  // namespace tg
