#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tokengray/harness.hpp"
#include "tokengray/model_tape.hpp"

using namespace tg;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.train_samples = 16;
  cfg.eval_samples = 8;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.model.image_h = cfg.model.image_w = 8;
  cfg.model.patch = 4;
  cfg.model.dim = 16;
  cfg.model.heads = 2;
  cfg.model.layers = 1;
  cfg.model.classes = 4;
  return cfg;
}

}  // namespace

TEST_CASE("config json round-trips through file and string") {
  ExperimentConfig cfg = tiny_config();
  cfg.graying.method = GrayingMethod::DctTG;
  cfg.graying.epsilon = 0.8;
  cfg.lr = 3e-4;
  const std::string path = (std::filesystem::temp_directory_path() / "tg_cfg.json").string();
  {
    std::ofstream out(path);
    out << config_to_json(cfg);
  }
  ExperimentConfig back = config_from_json_file(path);
  CHECK(back.lr == cfg.lr);
  CHECK(back.model.dim == cfg.model.dim);
  CHECK(back.graying.method == GrayingMethod::DctTG);
  CHECK(back.graying.epsilon == 0.8);
  std::remove(path.c_str());
}

TEST_CASE("config validation rejects unknown fields' values") {
  const std::string path = (std::filesystem::temp_directory_path() / "tg_bad.json").string();
  {
    std::ofstream out(path);
    out << R"({"dataset": "mnist"})";
  }
  CHECK_THROWS(config_from_json_file(path));
  std::remove(path.c_str());
}

TEST_CASE("adam moves parameters against the gradient") {
  VitSpec spec = tiny_config().model;
  ModelParams params = make_vit(spec, {800, 0});
  ModelParams grads = params;  // same shapes; fill with a known sign pattern
  for_each_param(grads, [](const std::string&, Matrix& g) {
    g = Matrix::filled(g.rows(), g.cols(), 1.0);
  });
  const double before = params.w_head(0, 0);
  AdamState state = make_adam(params);
  adam_step(params, grads, state, 1e-2, 0.0);
  CHECK(params.w_head(0, 0) < before);  // positive gradient lowers the weight
}

TEST_CASE("epoch permutations are valid and differ across epochs") {
  std::vector<int> p0 = epoch_permutation(50, {801, 0}, 0);
  std::vector<int> p1 = epoch_permutation(50, {801, 0}, 1);
  std::vector<int> sorted = p0;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(p0 != p1);
  CHECK(p0 == epoch_permutation(50, {801, 0}, 0));
}

TEST_CASE("training is deterministic end to end") {
  ExperimentConfig cfg = tiny_config();
  TrainResult a = train(cfg);
  TrainResult b = train(cfg);
  REQUIRE(a.epochs.size() == b.epochs.size());
  CHECK(a.init_hash == b.init_hash);
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].train_loss == b.epochs[i].train_loss);
    CHECK(a.epochs[i].eval_acc == b.epochs[i].eval_acc);
  }
  CHECK(checkpoint_hash(checkpoint_records(a.model)) ==
        checkpoint_hash(checkpoint_records(b.model)));
}

TEST_CASE("training reduces the loss on the synthetic task") {
  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 3;
  TrainResult r = train(cfg);
  REQUIRE(r.epochs.size() == 3);
  CHECK_FALSE(r.diverged);
  CHECK(r.epochs.back().train_loss < r.epochs.front().train_loss);
}

TEST_CASE("ablation arms share the initialization hash") {
  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 1;
  std::vector<AblationArm> arms = run_skip_ablation(cfg);
  REQUIRE(arms.size() == 3);
  CHECK(arms[0].result.init_hash == arms[1].result.init_hash);
  CHECK(arms[1].result.init_hash == arms[2].result.init_hash);
  for (const auto& arm : arms) CHECK_FALSE(arm.profile.layers.empty());
}

TEST_CASE("tg sweep runs one arm per graying config with shared data order") {
  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 1;
  std::vector<GrayingConfig> configs{GrayingConfig{},
                                     GrayingConfig{GrayingMethod::SvdTG, 0.7, false}};
  std::vector<SweepArm> arms = run_tg_sweep(cfg, configs);
  REQUIRE(arms.size() == 2);
  CHECK(arms[0].result.init_hash == arms[1].result.init_hash);
  // Graying lowers the tracked token condition number.
  CHECK(arms[1].result.epochs[0].ln_k_tokens < arms[0].result.epochs[0].ln_k_tokens);
}

TEST_CASE("checkpoint restores an identical model") {
  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 1;
  TrainResult r = train(cfg);
  NamedMatrices records = checkpoint_records(r.model);
  ModelParams restored = model_from_records(cfg.model, records);
  CHECK(checkpoint_hash(checkpoint_records(restored)) ==
        checkpoint_hash(records));
}

TEST_CASE("cifar loader parses records and validates sizes") {
  const std::string path = (std::filesystem::temp_directory_path() / "tg_cifar.bin").string();
  {
    std::ofstream out(path, std::ios::binary);
    for (int rec = 0; rec < 2; ++rec) {
      out.put(static_cast<char>(rec + 3));  // labels 3 and 4
      for (int i = 0; i < 3072; ++i) out.put(static_cast<char>((i + rec) % 256));
    }
  }
  Dataset ds = load_cifar10(path);
  REQUIRE(ds.images.size() == 2);
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 4);
  CHECK(ds.images[0].c == 3);
  CHECK(ds.channel_mean.size() == 3);
  // Standardization: per-channel mean approximately zero after normalization.
  double mean = 0.0;
  for (int i = 0; i < 1024; ++i) mean += ds.images[0].pix[i] + ds.images[1].pix[i];
  CHECK(std::fabs(mean / 2048.0) < 1.0);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.put('x');  // break the record alignment
  }
  CHECK_THROWS(load_cifar10(path));
  std::remove(path.c_str());
}

TEST_CASE("synthetic dataset is balanced and reproducible") {
  Dataset a = synth_dataset(20, 8, 8, 1, 4, 0.3, {802, 0});
  Dataset b = synth_dataset(20, 8, 8, 1, 4, 0.3, {802, 0});
  REQUIRE(a.images.size() == 20);
  int counts[4] = {0, 0, 0, 0};
  for (int label : a.labels) ++counts[label];
  for (int c : counts) CHECK(c == 5);
  CHECK(a.images[7].pix == b.images[7].pix);
}
