// tgray: command-line front end for the conditioning laboratory.
//
// Subcommands:
//   props     bound/ proposition verification suites
//   profile   per-layer condition profile of a (fresh or trained) model
//   train     single training run from a JSON config
//   ablate    three-arm skip ablation
//   sweep     token-graying sweep over methods/epsilons
//   gray      apply a graying transform to a matrix file
//   jacobian  singular spectrum of an attention block's Jacobian
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tokengray/dataset.hpp"
#include "tokengray/diagnostics.hpp"
#include "tokengray/graying.hpp"
#include "tokengray/harness.hpp"
#include "tokengray/io.hpp"
#include "tokengray/svd.hpp"
#include "tokengray/vitcore.hpp"

namespace {

using namespace tg;

Matrix read_any_matrix(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv")
    return read_matrix_csv(path);
  return read_matrix(path);
}

void write_any_matrix(const std::string& path, const Matrix& m) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv")
    write_matrix_csv(path, m);
  else
    write_matrix(path, m);
}

void print_stats(const BoundTrialStats& s, const std::string& format) {
  if (format == "json") {
    nlohmann::json j = {{"name", s.name},
                        {"trials", s.requested_trials},
                        {"excluded", s.excluded},
                        {"redraws", s.redraws},
                        {"satisfaction_fraction", s.satisfaction_fraction},
                        {"median_ratio", s.median_ratio},
                        {"median_ln_ratio", s.median_ln_ratio}};
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::printf("%-22s trials=%d excluded=%d satisfied=%.4f median_ratio=%.6g ln=%.4f\n",
              s.name.c_str(), s.requested_trials, s.excluded, s.satisfaction_fraction,
              s.median_ratio, s.median_ln_ratio);
}

void maybe_write(const BoundTrialStats& s, const std::string& out, std::uint64_t seed) {
  if (out.empty()) return;
  std::filesystem::create_directories(out);
  write_bound_report(s, out + "/" + s.name + ".csv", out + "/" + s.name + ".json", seed);
}

void print_profile(const ConditionReport& r) {
  std::printf("layer  ln_k(SA)  ln_k(SA+x)  ln_k(MLP)  ln_k(MLP+x)  ln_k(in)  ln_k(out)\n");
  for (const auto& rec : r.layers) {
    std::printf("%5d  %8.3f  %10.3f  %9.3f  %11.3f  %8.3f  %9.3f%s\n", rec.layer,
                rec.ln_k_sa_no_skip, rec.ln_k_sa_skip, rec.ln_k_mlp_no_skip,
                rec.ln_k_mlp_skip, rec.ln_k_in, rec.ln_k_out,
                rec.rank_deficient > 0 ? "  [rank-deficient taps]" : "");
  }
}

ExperimentConfig load_config_or_default(const std::string& path, std::uint64_t seed) {
  ExperimentConfig cfg;
  if (!path.empty()) cfg = config_from_json_file(path);
  if (seed != 0) cfg.seed = seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tgray: attention conditioning and token-graying laboratory"};
  app.require_subcommand(1);

  std::uint64_t seed = 7;
  std::string out_dir;
  std::string config_path;
  std::string format = "text";
  app.add_option("--seed", seed, "Base RNG seed")->capture_default_str();
  app.add_option("--out", out_dir, "Output directory for CSV/JSON reports");
  app.add_option("--config", config_path, "Experiment JSON config file");
  app.add_option("--format", format, "Summary format: text or json")
      ->check(CLI::IsMember({"text", "json"}));

  // props
  auto* props = app.add_subcommand("props", "Verify the conditioning propositions/bounds");
  std::string which = "all";
  int trials = 200, pn = 16, pd = 8, csize = 8, cchan = 4;
  props->add_option("--which", which, "prop1|prop2|prop2raw|ffn|convmixer|all")
      ->check(CLI::IsMember({"prop1", "prop2", "prop2raw", "ffn", "convmixer", "all"}));
  props->add_option("--trials", trials, "Trials per suite")->capture_default_str();
  props->add_option("--n", pn, "Token count n")->capture_default_str();
  props->add_option("--d", pd, "Embedding dim d")->capture_default_str();
  props->add_option("--conv-size", csize, "ConvMixer grid side")->capture_default_str();
  props->add_option("--conv-channels", cchan, "ConvMixer channels")->capture_default_str();

  // profile
  auto* profile = app.add_subcommand("profile", "Per-layer condition profile");
  int batch = 8;
  std::string tap = "pre";
  bool trained = false;
  profile->add_option("--batch", batch, "Images to average over")->capture_default_str();
  profile->add_option("--tap", tap, "Measurement tap: pre or post layer norm")
      ->check(CLI::IsMember({"pre", "post"}));
  profile->add_flag("--trained", trained, "Train first, then profile");

  // train
  auto* train_cmd = app.add_subcommand("train", "Run one training experiment");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Skip-connection ablation (3 arms)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Token-graying sweep");
  std::vector<double> eps_list{0.5, 0.7, 0.9};
  std::vector<std::string> methods{"svd", "dct"};
  sweep->add_option("--eps", eps_list, "Epsilon values")->capture_default_str();
  sweep->add_option("--methods", methods, "Graying methods to sweep")->capture_default_str();

  // gray
  auto* gray = app.add_subcommand("gray", "Apply token graying to a matrix file");
  std::string gray_in, gray_out, gray_method = "svd";
  double gray_eps = 0.95;
  bool gray_rescale = false;
  gray->add_option("--in", gray_in, "Input matrix (.csv or binary)")->required();
  gray->add_option("--output", gray_out, "Output matrix path")->required();
  gray->add_option("--method", gray_method, "svd or dct")
      ->check(CLI::IsMember({"svd", "dct"}));
  gray->add_option("--epsilon", gray_eps, "Amplification exponent")->capture_default_str();
  gray->add_flag("--rescale", gray_rescale, "Keep sigma_max instead of normalizing to 1");

  // jacobian
  auto* jac = app.add_subcommand("jacobian", "Attention block Jacobian spectrum");
  int jac_layer = 0, jac_tokens = 8;
  jac->add_option("--layer", jac_layer, "Block index")->capture_default_str();
  jac->add_option("--tokens", jac_tokens, "Token rows in the probe input")
      ->capture_default_str();

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (props->parsed()) {
      std::vector<BoundTrialStats> results;
      if (which == "prop1" || which == "all")
        results.push_back(verify_prop1(pn, pd, trials, {seed, 10}));
      if (which == "prop2" || which == "all")
        results.push_back(verify_prop2(pn, pd, trials, {seed, 11}, true));
      if (which == "prop2raw" || which == "all")
        results.push_back(verify_prop2(pn, pd, trials, {seed, 12}, false));
      if (which == "ffn" || which == "all")
        results.push_back(verify_ffn_bound(pn, pd, trials, {seed, 13}));
      if (which == "convmixer" || which == "all")
        results.push_back(verify_convmixer_bound(cchan, csize, trials, {seed, 14}));
      for (const auto& s : results) {
        print_stats(s, format);
        maybe_write(s, out_dir, seed);
      }
    } else if (profile->parsed()) {
      ExperimentConfig cfg = load_config_or_default(config_path, seed);
      ModelParams model = make_vit(cfg.model, {cfg.seed, 0});
      if (trained) model = train(cfg).model;
      Dataset eval_set = load_eval_split(cfg);
      const int n = std::min<int>(static_cast<int>(eval_set.images.size()), batch);
      std::vector<Image> probe(eval_set.images.begin(), eval_set.images.begin() + n);
      ConditionReport report = layer_condition_profile(
          model, probe, cfg.graying, tap == "post" ? TapPoint::PostNorm : TapPoint::PreNorm);
      print_profile(report);
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_condition_report(report, out_dir + "/profile.csv");
      }
    } else if (train_cmd->parsed()) {
      ExperimentConfig cfg = load_config_or_default(config_path, seed);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      TrainResult r = train(cfg);
      std::printf("init_hash=%016llx\n",
                  static_cast<unsigned long long>(r.init_hash));
      for (const auto& e : r.epochs)
        std::printf("epoch=%d loss=%.4f train_acc=%.4f eval_acc=%.4f ln_k_tokens=%.3f\n",
                    e.epoch, e.train_loss, e.train_acc, e.eval_acc, e.ln_k_tokens);
      if (r.diverged) {
        std::fprintf(stderr, "training diverged (non-finite loss)\n");
        return 1;
      }
    } else if (ablate->parsed()) {
      ExperimentConfig cfg = load_config_or_default(config_path, seed);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      std::vector<AblationArm> arms = run_skip_ablation(cfg);
      for (const auto& arm : arms) {
        const auto& es = arm.result.epochs;
        std::printf("arm=%-12s init_hash=%016llx final_eval_acc=%.4f diverged=%d\n",
                    arm.name.c_str(),
                    static_cast<unsigned long long>(arm.result.init_hash),
                    es.empty() ? 0.0 : es.back().eval_acc, arm.result.diverged ? 1 : 0);
        print_profile(arm.profile);
        if (!cfg.out_dir.empty())
          write_condition_report(arm.profile,
                                 cfg.out_dir + "/" + arm.name + "/profile.csv");
      }
    } else if (sweep->parsed()) {
      ExperimentConfig cfg = load_config_or_default(config_path, seed);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      std::vector<GrayingConfig> configs;
      configs.push_back({GrayingMethod::None, 1.0, false});
      for (const std::string& m : methods)
        for (double e : eps_list)
          configs.push_back({m == "dct" ? GrayingMethod::DctTG : GrayingMethod::SvdTG, e,
                             false});
      std::vector<SweepArm> arms = run_tg_sweep(cfg, configs);
      for (const auto& arm : arms) {
        const auto& es = arm.result.epochs;
        std::printf("arm=%-16s ln_k_tokens=%.3f final_eval_acc=%.4f diverged=%d\n",
                    arm.name.c_str(), es.empty() ? 0.0 : es.back().ln_k_tokens,
                    es.empty() ? 0.0 : es.back().eval_acc, arm.result.diverged ? 1 : 0);
      }
    } else if (gray->parsed()) {
      Matrix x = read_any_matrix(gray_in);
      const double before = ln_cond(x);
      Matrix y = gray_method == "dct" ? dct_token_gray(x, gray_eps)
                                      : svd_token_gray(x, gray_eps, gray_rescale);
      write_any_matrix(gray_out, y);
      std::printf("ln_kappa before=%.6f after=%.6f\n", before, ln_cond(y));
    } else if (jac->parsed()) {
      ExperimentConfig cfg = load_config_or_default(config_path, seed);
      ModelParams model = make_vit(cfg.model, {cfg.seed, 0});
      Matrix x = random_gaussian(jac_tokens, cfg.model.dim, {cfg.seed, 20});
      std::vector<double> spec = sab_jacobian_spectrum(model, jac_layer, x);
      std::printf("sigma_max=%.6g sigma_min=%.6g ln_kappa=%.4f count=%zu\n", spec.front(),
                  spec.back(), std::log(spec.front() / spec.back()), spec.size());
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        Matrix s(1, static_cast<int>(spec.size()));
        for (std::size_t i = 0; i < spec.size(); ++i) s(0, static_cast<int>(i)) = spec[i];
        write_matrix_csv(out_dir + "/jacobian_spectrum.csv", s);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tgray: %s\n", e.what());
    return 1;
  }
  return 0;
}
