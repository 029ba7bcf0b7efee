#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "mtpinn/config.hpp"

namespace fs = std::filesystem;
using namespace mtpinn;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string &args) {
  const std::string cmd = std::string(MTPINN_CLI) + " " + args + " 2>&1";
  Run r;
  FILE *pipe = popen(cmd.c_str(), "r");
  if (!pipe)
    return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe))
    r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() / "mtpinn_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path &dir, const std::string &json) {
  write_file_atomic(dir / "run.json", json);
  return dir / "run.json";
}

std::string slurp(const fs::path &p) { return read_file(p).value_or("<missing>"); }

std::vector<std::string> lines(const std::string &text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string &line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  for (std::string f; std::getline(in, f, ',');)
    out.push_back(f);
  return out;
}

const char *kSmallRun = R"({
  "model": {"hidden": [8, 8]},
  "train": {"epochs": 3, "folds": 3, "variants": ["full", "no_physics", "eda_only",
            "emotion_only", "ridge", "logistic"]},
  "data": {"synth": {"n": 150}},
  "output": "out"
})";

} // namespace

TEST(Cli, SynthWritesRequestedRows) {
  const auto dir = scratch("synth");
  const auto cfg = write_config(dir, R"({"data": {"synth": {"n": 100}}, "output": "out"})");
  const auto r = run("synth --config " + cfg.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto csv = lines(slurp(dir / "out" / "synth.csv"));
  EXPECT_EQ(csv.size(), 101u);
  EXPECT_EQ(csv[0], "t,panas_mean,sam_valence,sam_arousal,eda_mean,label");
  EXPECT_EQ(lines(slurp(dir / "out" / "synth.ddt.csv")).size(), 101u);
  EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
}

TEST(Cli, SynthIsDeterministicPerSeed) {
  const auto dir = scratch("synth_det");
  const auto cfg = write_config(dir, R"({"data": {"synth": {"n": 50}}})");
  ASSERT_EQ(run("synth --config " + cfg.string() + " --out " + (dir / "a").string()).code, 0);
  ASSERT_EQ(run("synth --config " + cfg.string() + " --out " + (dir / "b").string()).code, 0);
  ASSERT_EQ(run("synth --config " + cfg.string() + " --seed 9 --out " + (dir / "c").string()).code,
            0);
  EXPECT_EQ(slurp(dir / "a" / "synth.csv"), slurp(dir / "b" / "synth.csv"));
  EXPECT_NE(slurp(dir / "a" / "synth.csv"), slurp(dir / "c" / "synth.csv"));
}

TEST(Cli, SynthVerifyChecksTheResidual) {
  const auto dir = scratch("verify");
  const auto clean = write_config(dir, R"({"data": {"synth": {"n": 200, "noise_sd": 0}}})");
  const auto ok = run("synth --verify --config " + clean.string());
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("PASS residual_free"), std::string::npos) << ok.out;

  const auto dir2 = scratch("verify_noisy");
  const auto noisy = write_config(dir2, R"({"data": {"synth": {"n": 200, "noise_sd": 0.05}}})");
  const auto bad = run("synth --verify --config " + noisy.string());
  EXPECT_EQ(bad.code, 1) << bad.out;
  EXPECT_NE(bad.out.find("FAIL residual_free"), std::string::npos) << bad.out;
}

TEST(Cli, ConfigurationErrorsExitWithTwo) {
  const auto dir = scratch("bad_config");
  const auto unknown = run("kfold --config " + write_config(dir, R"({"train": {"epoch": 3}})").string());
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.out.find("train.epoch"), std::string::npos) << unknown.out;

  const auto floor =
      run("check --config " + write_config(dir, R"({"model": {"lambda_floor": -1}})").string());
  EXPECT_EQ(floor.code, 2);
  EXPECT_NE(floor.out.find("lambda_floor"), std::string::npos) << floor.out;
  EXPECT_EQ(floor.out.find("PASS"), std::string::npos) << "no suite may run";

  EXPECT_EQ(run("kfold --config " + (dir / "nope.json").string()).code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("kfold --threads 0").code, 2);
}

TEST(Cli, MalformedDataExitsWithTwoAndNamesTheRow) {
  const auto dir = scratch("bad_csv");
  write_file_atomic(dir / "d.csv", std::string(kCsvHeader) + "\n0,1,2,3,4,0\n0,1,x,3,4,1\n");
  const auto cfg = write_config(dir, R"({"data": {"input": "d.csv"}})");
  const auto r = run("kfold --config " + cfg.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("row 3"), std::string::npos) << r.out;
}

TEST(Cli, DivergentTrainingExitsWithThree) {
  const auto dir = scratch("diverge");
  const auto cfg = write_config(dir, R"({"model": {"hidden": [8, 8]},
    "train": {"epochs": 5, "lr": 1e300}, "data": {"synth": {"n": 100}}})");
  const auto r = run("train --config " + cfg.string());
  EXPECT_EQ(r.code, 3) << r.out;
  EXPECT_NE(r.out.find("numeric failure"), std::string::npos) << r.out;
}

TEST(Cli, KFoldWritesTablesAndIsRepeatable) {
  const auto dir = scratch("kfold");
  const auto cfg = write_config(dir, kSmallRun);
  ASSERT_EQ(run("kfold --threads 3 --config " + cfg.string()).code, 0);
  const auto out = dir / "out";
  const std::string metrics = slurp(out / "metrics.csv");
  const auto rows = lines(metrics);
  ASSERT_EQ(rows.size(), 5u); // header, 3 folds, Mean
  EXPECT_EQ(split(rows[4])[0], "Mean");
  // Mean row recomputed from the fold rows as written.
  for (std::size_t col : {1u, 2u, 4u, 7u}) {
    double sum = 0;
    for (std::size_t f = 1; f <= 3; ++f)
      sum += std::stod(split(rows[f])[col]);
    EXPECT_NEAR(std::stod(split(rows[4])[col]), sum / 3, 1e-15) << "column " << col;
  }
  EXPECT_EQ(lines(slurp(out / "curves.csv")).size(), 1u + 3 * 3);
  EXPECT_EQ(lines(slurp(out / "params.csv")).size(), 4u);
  EXPECT_EQ(lines(slurp(out / "confusion.csv")).size(), 3u);
  for (int f = 1; f <= 3; ++f)
    EXPECT_TRUE(fs::exists(out / "checkpoints" / ("fold_" + std::to_string(f) + ".json")));

  const std::string curves = slurp(out / "curves.csv");
  const std::string ckpt = slurp(out / "checkpoints" / "fold_2.json");
  ASSERT_EQ(run("kfold --threads 1 --config " + cfg.string()).code, 0);
  EXPECT_EQ(slurp(out / "metrics.csv"), metrics);
  EXPECT_EQ(slurp(out / "curves.csv"), curves);
  EXPECT_EQ(slurp(out / "checkpoints" / "fold_2.json"), ckpt);

  // report re-evaluates the checkpoints and reproduces the metrics table.
  fs::remove(out / "metrics.csv");
  const auto rep = run("report --config " + cfg.string());
  ASSERT_EQ(rep.code, 0) << rep.out;
  EXPECT_EQ(slurp(out / "metrics.csv"), metrics);
}

TEST(Cli, ReportWithoutCheckpointsIsAnError) {
  const auto dir = scratch("report_empty");
  const auto cfg = write_config(dir, R"({"data": {"synth": {"n": 60}}})");
  EXPECT_EQ(run("report --config " + cfg.string()).code, 2);
}

TEST(Cli, TrainWritesOneCheckpoint) {
  const auto dir = scratch("train");
  const auto cfg = write_config(dir, kSmallRun);
  const auto r = run("train --config " + cfg.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "out" / "checkpoints" / "fold_1.json"));
  EXPECT_EQ(lines(slurp(dir / "out" / "metrics.csv")).size(), 3u);
}

TEST(Cli, AblateWritesOneRowPerVariant) {
  const auto dir = scratch("ablate");
  const auto cfg = write_config(dir, kSmallRun);
  const auto r = run("ablate --threads 3 --config " + cfg.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = lines(slurp(dir / "out" / "ablation.csv"));
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0], "variant,eda_rmse,emotion_f1,pearson_r,physics_loss,notes");
  const std::vector<std::string> ids{"full", "no_physics", "eda_only", "emotion_only", "ridge",
                                     "logistic"};
  for (std::size_t i = 0; i < ids.size(); ++i)
    EXPECT_EQ(split(rows[i + 1])[0], ids[i]);
  EXPECT_EQ(split(rows[3])[2], "0");
  EXPECT_EQ(lines(slurp(dir / "out" / "comparison.csv")).size(), 5u);
}

TEST(Cli, CheckRunsEverySuite) {
  const auto r = run("check");
  EXPECT_EQ(r.code, 0) << r.out;
  for (const char *suite : {"gradient", "tangent", "ode", "residual_free", "recovery",
                            "metric_oracles", "stratification"})
    EXPECT_NE(r.out.find(std::string("PASS ") + suite + ":"), std::string::npos) << suite;
  EXPECT_NE(r.out.find("max relative error"), std::string::npos) << r.out;
}
