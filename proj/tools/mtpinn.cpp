// Command-line driver. Exit codes: 0 success, 1 failed check, 2 configuration
// or data error, 3 numeric failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtpinn/checkpoint.hpp"
#include "mtpinn/config.hpp"
#include "mtpinn/report.hpp"
#include "mtpinn/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace mtpinn;

namespace {

enum Exit : int { ok = 0, check_failed = 1, bad_input = 2, numeric = 3 };

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

RunConfig resolve(const Common &c) {
  RunConfig cfg = c.config.empty() ? parse_run_config("{}") : load_run_config(c.config);
  if (c.seed)
    cfg.set_seed(*c.seed);
  if (c.threads) {
    if (*c.threads < 1)
      throw ConfigError("--threads: must be >= 1");
    cfg.threads = *c.threads;
  }
  if (!c.out.empty())
    cfg.output = c.out;
  return cfg;
}

void write_out(const fs::path &dir, const std::string &name, const std::string &content) {
  fs::create_directories(dir);
  write_file_atomic(dir / name, content);
  std::cout << "wrote " << (dir / name).string() << '\n';
}

fs::path checkpoint_path(const fs::path &out, std::size_t fold) {
  return out / "checkpoints" / ("fold_" + std::to_string(fold) + ".json");
}

double max_abs_residual(const Dataset &d, std::span<const double> dydt, const PhysicsParams &p) {
  double worst = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto &s = d.samples[i];
    worst = std::max(worst, std::abs(p.gamma * dydt[i] + p.alpha0 * s.y - drive(p, s.e)));
  }
  return worst;
}

int cmd_synth(const RunConfig &cfg, bool verify) {
  const SynthData s = synth_generate(cfg.synth);
  const fs::path csv = cfg.output / "synth.csv";
  fs::create_directories(cfg.output);
  write_csv(s.data, csv);
  write_ddt_csv(s.dydt, ddt_path_for(csv));
  const auto &sp = cfg.synth;
  nlohmann::json m;
  m["seed"] = sp.seed;
  m["n"] = sp.n;
  m["noise_sd"] = sp.noise_sd;
  m["physics"] = {{"alpha0", sp.physics.alpha0},
                  {"beta", sp.physics.beta},
                  {"gamma", sp.physics.gamma}};
  m["y0"] = sp.y0;
  m["t_min"] = sp.t_min;
  m["t_max"] = sp.t_max;
  m["stress_fraction"] = sp.stress_fraction;
  m["data"] = csv.filename().string();
  m["ddt"] = ddt_path_for(csv).filename().string();
  write_file_atomic(cfg.output / "manifest.json", m.dump(1) + "\n");
  std::cout << "wrote " << csv.string() << ", " << ddt_path_for(csv).string() << ", "
            << (cfg.output / "manifest.json").string() << '\n';
  if (!verify)
    return ok;
  const Dataset back = load_csv(csv);
  const auto dydt = load_ddt_csv(ddt_path_for(csv));
  if (dydt.size() != back.size())
    throw ConfigError("verify: derivative file has " + std::to_string(dydt.size()) +
                      " rows, dataset has " + std::to_string(back.size()));
  const double worst = max_abs_residual(back, dydt, sp.physics);
  const bool pass = worst <= 1e-10;
  std::cout << (pass ? "PASS" : "FAIL") << " residual_free: max |residual| "
            << format_double(worst) << " at the true parameters (tolerance 1e-10)\n";
  return pass ? ok : check_failed;
}

void write_fold_tables(const fs::path &out, const std::vector<FoldReport> &reports,
                       bool with_curves) {
  write_out(out, "metrics.csv", metrics_csv(aggregate_folds(reports)));
  if (with_curves)
    write_out(out, "curves.csv", curves_csv(reports));
  write_out(out, "params.csv", params_csv(reports));
  write_out(out, "confusion.csv", confusion_csv(mean_normalized_confusion(reports)));
}

int cmd_train(const RunConfig &cfg) {
  const Dataset data = load_dataset(cfg);
  const auto split = stratified_kfold(data, cfg.folds, cfg.train.seed).front();
  auto report = run_fold(data.subset(split.train), data.subset(split.valid), cfg.train, cfg.model, 1);
  fs::create_directories(cfg.output / "checkpoints");
  save_checkpoint(report.model, checkpoint_path(cfg.output, 1));
  write_fold_tables(cfg.output, {report}, true);
  return ok;
}

int cmd_kfold(const RunConfig &cfg) {
  const Dataset data = load_dataset(cfg);
  const auto reports = run_kfold(data, cfg.folds, cfg.train, cfg.model, cfg.threads);
  fs::create_directories(cfg.output / "checkpoints");
  for (const auto &r : reports)
    save_checkpoint(r.model, checkpoint_path(cfg.output, r.fold));
  write_fold_tables(cfg.output, reports, true);
  return ok;
}

int cmd_ablate(const RunConfig &cfg) {
  const Dataset data = load_dataset(cfg);
  const auto res = ablation_table(data, cfg.variants, cfg.model, cfg.train, cfg.folds, cfg.threads,
                                  cfg.baselines);
  write_out(cfg.output, "ablation.csv", ablation_csv(res.rows));
  write_out(cfg.output, "comparison.csv", comparison_csv(res.rows));
  return ok;
}

/// Re-evaluates saved fold checkpoints on the folds implied by the config.
int cmd_report(const RunConfig &cfg) {
  const Dataset data = load_dataset(cfg);
  const auto splits = stratified_kfold(data, cfg.folds, cfg.train.seed);
  std::vector<FoldReport> reports;
  for (std::size_t f = 0; f < splits.size(); ++f) {
    const fs::path ckpt = checkpoint_path(cfg.output, f + 1);
    if (!fs::exists(ckpt)) {
      if (f == 0)
        throw ConfigError("report: no checkpoints under " + (cfg.output / "checkpoints").string());
      break;
    }
    FoldReport r;
    r.fold = f + 1;
    r.model = load_checkpoint(ckpt);
    const Dataset valid = data.subset(splits[f].valid);
    const Evaluation ev = evaluate(r.model, r.model.normalizer.apply(valid), &valid);
    r.regression = ev.regression;
    r.classification = ev.classification;
    r.valid_physics_loss = ev.physics_loss;
    r.physics = r.model.physics;
    reports.push_back(std::move(r));
  }
  write_fold_tables(cfg.output, reports, false);
  return ok;
}

int cmd_check(const RunConfig &cfg) {
  bool all = true;
  for (const auto &r : run_self_checks(cfg.seed)) {
    std::printf("%s %s: %s [%.3f s]\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str(), r.seconds);
    all = all && r.pass;
  }
  std::printf("%s\n", all ? "all suites passed" : "one or more suites failed");
  return all ? ok : check_failed;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Multi-task physics-informed network for EDA regression and stress classification"};
  app.require_subcommand(1);
  Common common;
  bool verify = false;

  auto add_common = [&](CLI::App *sub) {
    sub->add_option("--config", common.config, "JSON run configuration");
    sub->add_option("--out", common.out, "output directory (overrides config)");
    sub->add_option("--seed", common.seed, "root seed (overrides config)");
    sub->add_option("--threads", common.threads, "worker threads for folds");
  };
  auto *synth = app.add_subcommand("synth", "generate the synthetic benchmark");
  synth->add_flag("--verify", verify, "check the residual of the written files");
  auto *train = app.add_subcommand("train", "train on the first fold split");
  auto *kfold = app.add_subcommand("kfold", "stratified k-fold cross-validation");
  auto *ablate = app.add_subcommand("ablate", "ablation table with baselines");
  auto *check = app.add_subcommand("check", "run the self-check suites");
  auto *report = app.add_subcommand("report", "re-evaluate saved fold checkpoints");
  for (auto *s : {synth, train, kfold, ablate, check, report})
    add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? ok : bad_input;
  }

  try {
    const RunConfig cfg = resolve(common);
    if (*synth)
      return cmd_synth(cfg, verify);
    if (*train)
      return cmd_train(cfg);
    if (*kfold)
      return cmd_kfold(cfg);
    if (*ablate)
      return cmd_ablate(cfg);
    if (*check)
      return cmd_check(cfg);
    return cmd_report(cfg);
  } catch (const NumericDomainError &e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return numeric;
  } catch (const ConfigError &e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return bad_input;
  } catch (const ParseError &e) {
    std::cerr << "data error: " << e.what() << '\n';
    return bad_input;
  } catch (const CheckpointError &e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return bad_input;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return bad_input;
  }
}
