#include "tokengray/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tokengray/autodiff.hpp"
#include "tokengray/model_tape.hpp"
#include "tokengray/svd.hpp"

namespace tg {

namespace {

AttentionKind attention_from_string(const std::string& s) {
  if (s == "softmax") return AttentionKind::Softmax;
  if (s == "scaled_linear") return AttentionKind::ScaledLinear;
  throw std::invalid_argument("config: unknown attention kind '" + s + "'");
}

GrayingMethod graying_from_string(const std::string& s) {
  if (s == "none") return GrayingMethod::None;
  if (s == "svd") return GrayingMethod::SvdTG;
  if (s == "dct") return GrayingMethod::DctTG;
  throw std::invalid_argument("config: unknown graying method '" + s + "'");
}

std::string attention_to_string(AttentionKind k) {
  return k == AttentionKind::Softmax ? "softmax" : "scaled_linear";
}

std::string graying_to_string(GrayingMethod m) {
  switch (m) {
    case GrayingMethod::None: return "none";
    case GrayingMethod::SvdTG: return "svd";
    case GrayingMethod::DctTG: return "dct";
  }
  return "none";
}

}  // namespace

ExperimentConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  ExperimentConfig c;
  c.dataset = j.value("dataset", c.dataset);
  c.cifar_path = j.value("cifar_path", c.cifar_path);
  c.train_samples = j.value("train_samples", c.train_samples);
  c.eval_samples = j.value("eval_samples", c.eval_samples);
  c.synth_noise = j.value("synth_noise", c.synth_noise);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.save_checkpoints = j.value("save_checkpoints", c.save_checkpoints);
  if (j.contains("model")) {
    const auto& m = j["model"];
    c.model.image_h = m.value("image_h", c.model.image_h);
    c.model.image_w = m.value("image_w", c.model.image_w);
    c.model.channels = m.value("channels", c.model.channels);
    c.model.patch = m.value("patch", c.model.patch);
    c.model.dim = m.value("dim", c.model.dim);
    c.model.heads = m.value("heads", c.model.heads);
    c.model.layers = m.value("layers", c.model.layers);
    c.model.classes = m.value("classes", c.model.classes);
    c.model.use_cls = m.value("use_cls", c.model.use_cls);
    if (m.contains("attention")) c.model.attention = attention_from_string(m["attention"]);
    c.model.linear_scale = m.value("linear_scale", c.model.linear_scale);
    c.model.block.skip_sab = m.value("skip_sab", c.model.block.skip_sab);
    c.model.block.skip_ffn = m.value("skip_ffn", c.model.block.skip_ffn);
    c.model.block.prenorm = m.value("prenorm", c.model.block.prenorm);
  }
  if (j.contains("graying")) {
    const auto& g = j["graying"];
    if (g.contains("method")) c.graying.method = graying_from_string(g["method"]);
    c.graying.epsilon = g.value("epsilon", c.graying.epsilon);
    c.graying.rescale = g.value("rescale", c.graying.rescale);
  }
  if (c.dataset != "synth" && c.dataset != "synth_texture" && c.dataset != "cifar10")
    throw std::invalid_argument("config: unknown dataset '" + c.dataset + "'");
  if (c.epochs < 0 || c.batch_size <= 0 || c.train_samples <= 0 || c.eval_samples <= 0)
    throw std::invalid_argument("config: non-positive sizes");
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["dataset"] = c.dataset;
  if (!c.cifar_path.empty()) j["cifar_path"] = c.cifar_path;
  j["train_samples"] = c.train_samples;
  j["eval_samples"] = c.eval_samples;
  j["synth_noise"] = c.synth_noise;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["seed"] = c.seed;
  if (!c.out_dir.empty()) j["out_dir"] = c.out_dir;
  j["save_checkpoints"] = c.save_checkpoints;
  j["model"] = {{"image_h", c.model.image_h},
                {"image_w", c.model.image_w},
                {"channels", c.model.channels},
                {"patch", c.model.patch},
                {"dim", c.model.dim},
                {"heads", c.model.heads},
                {"layers", c.model.layers},
                {"classes", c.model.classes},
                {"use_cls", c.model.use_cls},
                {"attention", attention_to_string(c.model.attention)},
                {"linear_scale", c.model.linear_scale},
                {"skip_sab", c.model.block.skip_sab},
                {"skip_ffn", c.model.block.skip_ffn},
                {"prenorm", c.model.block.prenorm}};
  j["graying"] = {{"method", graying_to_string(c.graying.method)},
                  {"epsilon", c.graying.epsilon},
                  {"rescale", c.graying.rescale}};
  return j.dump(2);
}

namespace {

template <typename ModelT>
AdamState make_adam_t(const ModelT& params) {
  AdamState s;
  for_each_param(params, [&](const std::string&, const Matrix& p) {
    s.m.emplace_back(p.rows(), p.cols());
    s.v.emplace_back(p.rows(), p.cols());
  });
  return s;
}

template <typename ModelT>
void adam_step_t(ModelT& params, const ModelT& grads, AdamState& state, double lr,
                 double weight_decay) {
  std::vector<Matrix*> ps;
  std::vector<const Matrix*> gs;
  for_each_param(params, [&](const std::string&, Matrix& p) { ps.push_back(&p); });
  for_each_param(grads, [&](const std::string&, const Matrix& g) { gs.push_back(&g); });
  if (ps.size() != gs.size() || ps.size() != state.m.size())
    throw std::invalid_argument("adam_step: mismatched parameter lists");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Matrix& p = *ps[i];
    const Matrix& g = *gs[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    for (int r = 0; r < p.rows(); ++r) {
      for (int c = 0; c < p.cols(); ++c) {
        const double gv = g(r, c);
        m(r, c) = state.beta1 * m(r, c) + (1.0 - state.beta1) * gv;
        v(r, c) = state.beta2 * v(r, c) + (1.0 - state.beta2) * gv * gv;
        const double mhat = m(r, c) / bc1;
        const double vhat = v(r, c) / bc2;
        // Decoupled weight decay, applied directly to the parameter.
        p(r, c) -= lr * (mhat / (std::sqrt(vhat) + state.eps) + weight_decay * p(r, c));
      }
    }
  }
}

}  // namespace

AdamState make_adam(const ModelParams& params) { return make_adam_t(params); }

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               double weight_decay) {
  adam_step_t(params, grads, state, lr, weight_decay);
}

NamedMatrices checkpoint_records(const ModelParams& model) {
  NamedMatrices records;
  for_each_param(model, [&](const std::string& name, const Matrix& p) {
    records.emplace_back(name, p);
  });
  return records;
}

ModelParams model_from_records(const VitSpec& spec, const NamedMatrices& records) {
  ModelParams model = make_vit(spec, {0, 0});
  std::size_t used = 0;
  for_each_param(model, [&](const std::string& name, Matrix& p) {
    for (const auto& [rname, rmat] : records) {
      if (rname == name) {
        if (!p.same_shape(rmat))
          throw std::runtime_error("checkpoint: shape mismatch for " + name);
        p = rmat;
        ++used;
        return;
      }
    }
    throw std::runtime_error("checkpoint: missing parameter " + name);
  });
  if (used != records.size())
    throw std::runtime_error("checkpoint: extra records beyond the model's parameters");
  return model;
}

Dataset load_train_split(const ExperimentConfig& cfg) {
  if (cfg.dataset == "cifar10") {
    Dataset all = load_cifar10(cfg.cifar_path, cfg.train_samples + cfg.eval_samples);
    all.images.resize(std::min<std::size_t>(all.images.size(), cfg.train_samples));
    all.labels.resize(all.images.size());
    return all;
  }
  auto* make = cfg.dataset == "synth_texture" ? synth_texture_dataset : synth_dataset;
  return make(cfg.train_samples, cfg.model.image_h, cfg.model.image_w, cfg.model.channels,
              cfg.model.classes, cfg.synth_noise, {cfg.seed, 1});
}

Dataset load_eval_split(const ExperimentConfig& cfg) {
  if (cfg.dataset == "cifar10") {
    Dataset all = load_cifar10(cfg.cifar_path, cfg.train_samples + cfg.eval_samples);
    Dataset eval;
    eval.name = all.name;
    eval.classes = all.classes;
    eval.channel_mean = all.channel_mean;
    eval.channel_std = all.channel_std;
    for (std::size_t i = cfg.train_samples; i < all.images.size(); ++i) {
      eval.images.push_back(all.images[i]);
      eval.labels.push_back(all.labels[i]);
    }
    if (eval.images.empty())
      throw std::runtime_error("load_eval_split: CIFAR file too small for the eval split");
    return eval;
  }
  auto* make = cfg.dataset == "synth_texture" ? synth_texture_dataset : synth_dataset;
  return make(cfg.eval_samples, cfg.model.image_h, cfg.model.image_w, cfg.model.channels,
              cfg.model.classes, cfg.synth_noise, {cfg.seed, 2});
}

double eval_accuracy(const ModelParams& model, const Dataset& ds, const GrayingConfig& graying,
                     int limit) {
  int n = static_cast<int>(ds.images.size());
  if (limit > 0) n = std::min(n, limit);
  if (n == 0) return 0.0;
  std::vector<Image> subset(ds.images.begin(), ds.images.begin() + n);
  Matrix logits = vit_forward(subset, model, graying);
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    if (best == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / n;
}

namespace {

ModelParams zero_like(const ModelParams& model) {
  ModelParams z = model;
  for_each_param(z, [](const std::string&, Matrix& p) { p = Matrix(p.rows(), p.cols()); });
  return z;
}

double mean_token_ln_cond(const Dataset& ds, const ExperimentConfig& cfg, int limit) {
  const int n = std::min<int>(static_cast<int>(ds.images.size()), limit);
  double sum = 0.0;
  int finite = 0;
  for (int i = 0; i < n; ++i) {
    Matrix tokens = apply_graying(tokenize(ds.images[i], cfg.model.patch), cfg.graying);
    const ConditionNumber k = condition_number(tokens);
    if (k.finite) {
      sum += k.log_value;
      ++finite;
    }
  }
  return finite > 0 ? sum / finite : std::numeric_limits<double>::infinity();
}

}  // namespace

TrainResult train_with_init(const ExperimentConfig& cfg, const ModelParams& init,
                            const Dataset& train_set, const Dataset& eval_set) {
  TrainResult result;
  result.config = cfg;
  result.model = init;
  result.init_hash = checkpoint_hash(checkpoint_records(init));

  AdamState adam = make_adam(result.model);
  const int n = static_cast<int>(train_set.images.size());
  const double ln_k_tokens = mean_token_ln_cond(eval_set, cfg, 32);

  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);
  if (cfg.save_checkpoints && !cfg.out_dir.empty())
    write_checkpoint(cfg.out_dir + "/epoch0.ckpt", checkpoint_records(result.model));

  ad::Tape tape;
  for (int epoch = 0; epoch < cfg.epochs && !result.diverged; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.ln_k_tokens = ln_k_tokens;
    const std::vector<int> order = epoch_permutation(n, {cfg.seed, 3}, epoch);
    double loss_sum = 0.0;
    int loss_count = 0, correct = 0;
    for (int start = 0; start < n && !result.diverged; start += cfg.batch_size) {
      const int end = std::min(n, start + cfg.batch_size);
      ModelParams grads = zero_like(result.model);
      for (int bi = start; bi < end; ++bi) {
        const int idx = order[bi];
        Matrix tokens =
            apply_graying(tokenize(train_set.images[idx], cfg.model.patch), cfg.graying);
        tape.reset();
        VitBinder binder = bind_vit(tape, result.model);
        ad::Var logits = vit_logits_tape(tape, binder, result.model, tokens);
        ad::Var loss = tape.cross_entropy(logits, {train_set.labels[idx]});
        const double loss_val = tape.value(loss)(0, 0);
        if (!std::isfinite(loss_val)) {
          ++rec.divergence_events;
          result.diverged = true;
          break;
        }
        const Matrix& lv = tape.value(logits);
        int best = 0;
        for (int c = 1; c < lv.cols(); ++c)
          if (lv(0, c) > lv(0, best)) best = c;
        if (best == train_set.labels[idx]) ++correct;
        loss_sum += loss_val;
        ++loss_count;
        tape.backward(loss);
        accumulate_grads(tape, binder, grads);
      }
      if (result.diverged) break;
      for_each_param(grads,
                     [&](const std::string&, Matrix& g) { g *= 1.0 / (end - start); });
      adam_step(result.model, grads, adam, cfg.lr, cfg.weight_decay);
    }
    rec.train_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    rec.train_acc = loss_count > 0 ? static_cast<double>(correct) / loss_count : 0.0;
    rec.eval_acc = eval_accuracy(result.model, eval_set, cfg.graying);
    result.epochs.push_back(rec);
  }

  if (!cfg.out_dir.empty()) {
    write_epochs_csv(cfg.out_dir + "/epochs.csv", result.epochs);
    if (cfg.save_checkpoints)
      write_checkpoint(cfg.out_dir + "/final.ckpt", checkpoint_records(result.model));
  }
  return result;
}

TrainResult train(const ExperimentConfig& cfg) {
  const ModelParams init = make_vit(cfg.model, {cfg.seed, 0});
  const Dataset train_set = load_train_split(cfg);
  const Dataset eval_set = load_eval_split(cfg);
  return train_with_init(cfg, init, train_set, eval_set);
}

std::vector<AblationArm> run_skip_ablation(const ExperimentConfig& cfg) {
  const ModelParams init = make_vit(cfg.model, {cfg.seed, 0});
  const Dataset train_set = load_train_split(cfg);
  const Dataset eval_set = load_eval_split(cfg);

  struct ArmSpec {
    const char* name;
    bool skip_sab, skip_ffn;
  };
  const ArmSpec arms[] = {{"full", true, true},
                          {"no_ffn_skip", true, false},
                          {"no_sab_skip", false, true}};
  std::vector<AblationArm> out;
  for (const ArmSpec& a : arms) {
    ExperimentConfig arm_cfg = cfg;
    arm_cfg.model.block.skip_sab = a.skip_sab;
    arm_cfg.model.block.skip_ffn = a.skip_ffn;
    if (!cfg.out_dir.empty()) arm_cfg.out_dir = cfg.out_dir + "/" + a.name;
    ModelParams arm_init = init;
    arm_init.spec.block = arm_cfg.model.block;
    for (Block& b : arm_init.blocks) b.cfg = arm_cfg.model.block;
    AblationArm arm;
    arm.name = a.name;
    arm.result = train_with_init(arm_cfg, arm_init, train_set, eval_set);
    const int profile_n = std::min<int>(static_cast<int>(eval_set.images.size()), 8);
    std::vector<Image> probe(eval_set.images.begin(), eval_set.images.begin() + profile_n);
    arm.profile =
        layer_condition_profile(arm.result.model, probe, cfg.graying, TapPoint::PreNorm);
    out.push_back(std::move(arm));
  }
  return out;
}

std::vector<SweepArm> run_tg_sweep(const ExperimentConfig& cfg,
                                   const std::vector<GrayingConfig>& configs) {
  const ModelParams init = make_vit(cfg.model, {cfg.seed, 0});
  const Dataset train_set = load_train_split(cfg);
  const Dataset eval_set = load_eval_split(cfg);
  std::vector<SweepArm> out;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    ExperimentConfig arm_cfg = cfg;
    arm_cfg.graying = configs[i];
    std::string name = graying_to_string(configs[i].method);
    if (configs[i].method != GrayingMethod::None)
      name += "_eps" + std::to_string(configs[i].epsilon);
    if (!cfg.out_dir.empty()) arm_cfg.out_dir = cfg.out_dir + "/" + name;
    SweepArm arm;
    arm.name = name;
    arm.graying = configs[i];
    arm.result = train_with_init(arm_cfg, init, train_set, eval_set);
    out.push_back(std::move(arm));
  }
  return out;
}

double eval_accuracy_convmixer(const ConvMixerParams& model, const Dataset& ds) {
  if (ds.images.empty()) return 0.0;
  Matrix logits = convmixer_forward(ds.images, model);
  int correct = 0;
  for (int i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    if (best == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / logits.rows();
}

namespace {

ConvMixerParams zero_like(const ConvMixerParams& model) {
  ConvMixerParams z = model;
  for_each_param(z, [](const std::string&, Matrix& p) { p = Matrix(p.rows(), p.cols()); });
  return z;
}

void sync_bn_stats(ConvMixerParams& model, const std::vector<ad::BatchNormState>& state) {
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    model.blocks[l].bn1.running_mean = state[2 * l].mean;
    model.blocks[l].bn1.running_var = state[2 * l].var;
    model.blocks[l].bn2.running_mean = state[2 * l + 1].mean;
    model.blocks[l].bn2.running_var = state[2 * l + 1].var;
  }
}

}  // namespace

ConvMixerTrainResult train_convmixer(const ConvMixerSpec& spec, const ExperimentConfig& cfg) {
  ConvMixerTrainResult result;
  result.model = make_convmixer(spec, {cfg.seed, 0});
  ExperimentConfig data_cfg = cfg;
  data_cfg.model.image_h = spec.image_h;
  data_cfg.model.image_w = spec.image_w;
  data_cfg.model.channels = spec.channels;
  data_cfg.model.classes = spec.classes;
  const Dataset train_set = load_train_split(data_cfg);
  const Dataset eval_set = load_eval_split(data_cfg);
  const int n = static_cast<int>(train_set.images.size());

  AdamState adam = make_adam_t(result.model);
  std::vector<ad::BatchNormState> bn_state = make_bn_state(result.model);
  ad::Tape tape;
  for (int epoch = 0; epoch < cfg.epochs && !result.diverged; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const std::vector<int> order = epoch_permutation(n, {cfg.seed, 4}, epoch);
    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n && !result.diverged; start += cfg.batch_size) {
      const int end = std::min(n, start + cfg.batch_size);
      std::vector<Matrix> tokens;
      std::vector<int> labels;
      for (int bi = start; bi < end; ++bi) {
        tokens.push_back(tokenize(train_set.images[order[bi]], spec.patch));
        labels.push_back(train_set.labels[order[bi]]);
      }
      tape.reset();
      ConvMixerBinder binder = bind_convmixer(tape, result.model);
      ad::Var logits =
          convmixer_logits_tape(tape, binder, result.model, tokens, bn_state, true);
      ad::Var loss = tape.cross_entropy(logits, labels);
      const double loss_val = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_val)) {
        ++rec.divergence_events;
        result.diverged = true;
        break;
      }
      loss_sum += loss_val;
      ++batches;
      tape.backward(loss);
      ConvMixerParams grads = zero_like(result.model);
      accumulate_grads(tape, binder, grads);
      adam_step_t(result.model, grads, adam, cfg.lr, cfg.weight_decay);
      sync_bn_stats(result.model, bn_state);
    }
    rec.train_loss = batches > 0 ? loss_sum / batches : 0.0;
    rec.eval_acc = eval_accuracy_convmixer(result.model, eval_set);
    result.epochs.push_back(rec);
  }
  return result;
}

void write_epochs_csv(const std::string& path, const std::vector<EpochRecord>& epochs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_epochs_csv: cannot open " + path);
  out << "epoch,train_loss,train_acc,eval_acc,ln_k_tokens,divergence_events\n";
  out.precision(17);
  for (const EpochRecord& r : epochs) {
    out << r.epoch << ',' << r.train_loss << ',' << r.train_acc << ',' << r.eval_acc << ','
        << r.ln_k_tokens << ',' << r.divergence_events << '\n';
  }
}

}  // namespace tg
