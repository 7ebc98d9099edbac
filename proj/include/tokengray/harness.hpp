#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokengray/dataset.hpp"
#include "tokengray/diagnostics.hpp"
#include "tokengray/graying.hpp"
#include "tokengray/io.hpp"
#include "tokengray/vitcore.hpp"

namespace tg {

struct ExperimentConfig {
  // Data.
  std::string dataset = "synth";  // "synth" or "cifar10"
  std::string cifar_path;
  int train_samples = 128;
  int eval_samples = 64;
  double synth_noise = 0.35;

  // Optimization.
  int epochs = 3;
  int batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.05;
  std::uint64_t seed = 7;

  // Model and graying.
  VitSpec model;
  GrayingConfig graying;

  // Output.
  std::string out_dir;
  bool save_checkpoints = false;
};

ExperimentConfig config_from_json_file(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

// Decoupled-weight-decay Adam over the flattened parameter list.
struct AdamState {
  std::vector<Matrix> m, v;
  int step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

AdamState make_adam(const ModelParams& params);
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               double weight_decay);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double eval_acc = 0.0;
  // Mean ln condition number of the (grayed) input token matrices over the
  // eval batch; the quantity the token-graying sweep tracks.
  double ln_k_tokens = 0.0;
  int divergence_events = 0;  // non-finite losses seen this epoch
};

struct TrainResult {
  ExperimentConfig config;
  ModelParams model;
  std::vector<EpochRecord> epochs;
  std::uint64_t init_hash = 0;  // checkpoint hash of the epoch-0 weights
  bool diverged = false;        // true when training aborted on non-finite loss
};

NamedMatrices checkpoint_records(const ModelParams& model);
ModelParams model_from_records(const VitSpec& spec, const NamedMatrices& records);

Dataset load_train_split(const ExperimentConfig& cfg);
Dataset load_eval_split(const ExperimentConfig& cfg);

// Full deterministic loop: build (or reuse) a model, iterate minibatches with
// per-image tapes, Adam updates, per-epoch train/eval metrics. A non-finite
// loss is recorded and ends training early rather than throwing.
TrainResult train(const ExperimentConfig& cfg);
TrainResult train_with_init(const ExperimentConfig& cfg, const ModelParams& init,
                            const Dataset& train_set, const Dataset& eval_set);

struct AblationArm {
  std::string name;
  TrainResult result;
  ConditionReport profile;  // post-training layer condition profile
};

// Three arms from one shared initialization: both skips ("full"), FFN skip
// removed, and attention skip removed.
std::vector<AblationArm> run_skip_ablation(const ExperimentConfig& cfg);

struct ConvMixerTrainResult {
  ConvMixerParams model;
  std::vector<EpochRecord> epochs;
  bool diverged = false;
};

// Whole-minibatch tapes so batch norm sees true batch statistics; running
// stats are written back into the model after every step. Data, epochs, and
// optimizer settings come from cfg; the architecture from spec.
ConvMixerTrainResult train_convmixer(const ConvMixerSpec& spec, const ExperimentConfig& cfg);

double eval_accuracy_convmixer(const ConvMixerParams& model, const Dataset& ds);

struct SweepArm {
  std::string name;
  GrayingConfig graying;
  TrainResult result;
};

// One training run per graying configuration, identical init and data order.
std::vector<SweepArm> run_tg_sweep(const ExperimentConfig& cfg,
                                   const std::vector<GrayingConfig>& configs);

void write_epochs_csv(const std::string& path, const std::vector<EpochRecord>& epochs);

double eval_accuracy(const ModelParams& model, const Dataset& ds, const GrayingConfig& graying,
                     int limit = 0);

}  // namespace tg
