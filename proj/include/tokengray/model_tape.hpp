#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tokengray/autodiff.hpp"
#include "tokengray/vitcore.hpp"

namespace tg {

// Visits every learnable tensor with a stable name; the single source of
// ordering for checkpoints, gradients, and optimizer state.
using ParamVisitor = std::function<void(const std::string&, Matrix&)>;
using ConstParamVisitor = std::function<void(const std::string&, const Matrix&)>;

void for_each_param(ModelParams& m, const ParamVisitor& fn);
void for_each_param(const ModelParams& m, const ConstParamVisitor& fn);
void for_each_param(ConvMixerParams& m, const ParamVisitor& fn);
void for_each_param(const ConvMixerParams& m, const ConstParamVisitor& fn);

// Tape handles for every learnable tensor of a ViT, in for_each_param order.
struct VitBinder {
  std::vector<ad::Var> vars;
  std::vector<std::string> names;
};

VitBinder bind_vit(ad::Tape& tape, const ModelParams& model);

// Forward for one image's (already grayed) token matrix; returns 1 x classes.
ad::Var vit_logits_tape(ad::Tape& tape, const VitBinder& binder, const ModelParams& model,
                        const Matrix& tokens);

// Adds this tape's parameter gradients into grads (a zero-initialized copy of
// the model, used purely as a shape-matched gradient holder).
void accumulate_grads(const ad::Tape& tape, const VitBinder& binder, ModelParams& grads);

// ConvMixer processes a whole minibatch on one tape so batch norm sees true
// batch statistics.
struct ConvMixerBinder {
  std::vector<ad::Var> vars;
  std::vector<std::string> names;
};

ConvMixerBinder bind_convmixer(ad::Tape& tape, const ConvMixerParams& model);

// Batch forward in training mode; updates the running stats inside bn_state
// (one BatchNormState per BN layer, 2 per block). Returns batch x classes.
ad::Var convmixer_logits_tape(ad::Tape& tape, const ConvMixerBinder& binder,
                              const ConvMixerParams& model,
                              const std::vector<Matrix>& token_batch,
                              std::vector<ad::BatchNormState>& bn_state, bool training);

void accumulate_grads(const ad::Tape& tape, const ConvMixerBinder& binder,
                      ConvMixerParams& grads);

std::vector<ad::BatchNormState> make_bn_state(const ConvMixerParams& model);

// SAB as a function of its input tokens with fixed weights; used for the
// Jacobian spectrum diagnostics. Compatible with ad::jacobian.
ad::Var sab_tape(ad::Tape& tape, ad::Var x, const Block& block);

}  // namespace tg
