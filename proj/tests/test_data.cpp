#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "mtpinn/data.hpp"
#include "mtpinn/objective.hpp"
#include "test_util.hpp"

using namespace mtpinn;

namespace {

std::string row_error(const std::string &text) {
  try {
    parse_csv(text);
  } catch (const ParseError &e) {
    return e.what();
  }
  return "";
}

Dataset labelled(std::size_t n, std::size_t positives) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.t = static_cast<double>(i);
    s.label = i < positives ? 1 : 0;
    d.samples.push_back(s);
  }
  return d;
}

} // namespace

TEST(Csv, ParsesWellFormedFile) {
  const auto d = parse_csv("t,panas_mean,sam_valence,sam_arousal,eda_mean,label\n"
                           "0,1,2,3,0.5,0\n"
                           "0.5,1.5,2.5,3.5,0.25,1\r\n"
                           "1,-1,2e-3,3,0.75,1\n");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.samples[1].e[1], 2.5);
  EXPECT_EQ(d.samples[2].e[1], 2e-3);
  EXPECT_EQ(d.samples[1].label, 1);
  EXPECT_EQ(d.source_rows, (std::vector<std::size_t>{2, 3, 4}));
}

TEST(Csv, SchemaErrorsNameTheColumn) {
  const auto msg = row_error("t,panas_mean,sam_valence,sam_arousal,eda_mean,lable\n0,1,2,3,4,0\n");
  EXPECT_NE(msg.find("'label'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
  EXPECT_NE(row_error("t,panas_mean,sam_valence,sam_arousal,eda_mean\n").find("missing column 'label'"),
            std::string::npos);
  EXPECT_NE(row_error("t,panas_mean,sam_valence,sam_arousal,eda_mean,label,x\n").find("extra column"),
            std::string::npos);
}

TEST(Csv, RowErrorsAreAddressed) {
  const std::string head = std::string(kCsvHeader) + "\n0,1,2,3,4,0\n";
  auto msg = row_error(head + "0,1,abc,3,4,0\n");
  EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("sam_valence"), std::string::npos) << msg;
  msg = row_error(head + "0,1,2,3,4,2\n");
  EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("label"), std::string::npos) << msg;
  msg = row_error(head + "0,1,2,3,4\n");
  EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
  msg = row_error(head + "0,1,2,nan,4,0\n");
  EXPECT_NE(msg.find("sam_arousal"), std::string::npos) << msg;
  EXPECT_THROW(parse_csv(""), ParseError);
  EXPECT_THROW(load_csv("/nonexistent/definitely/missing.csv"), ParseError);
}

TEST(Csv, WriteLoadRoundTripIsIdentity) {
  Pcg32 rng(77, 1);
  Dataset d;
  for (int i = 0; i < 200; ++i) {
    Sample s;
    s.t = rng.uniform(-1e3, 1e3);
    for (double &v : s.e)
      v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
    s.y = rng.uniform() / 3.0;
    s.label = static_cast<int>(rng.below(2));
    d.samples.push_back(s);
  }
  const auto path = std::filesystem::temp_directory_path() / "mtpinn_roundtrip.csv";
  write_csv(d, path);
  const Dataset back = load_csv(path);
  EXPECT_EQ(back.samples, d.samples);
}

TEST(Csv, DerivativeSiblingFile) {
  const auto path = std::filesystem::temp_directory_path() / "mtpinn_ddt.csv";
  EXPECT_EQ(ddt_path_for(path).filename(), "mtpinn_ddt.ddt.csv");
  const std::vector<double> dydt{0.1, -2.5, 1.0 / 3.0};
  write_ddt_csv(dydt, ddt_path_for(path));
  EXPECT_EQ(*read_file(ddt_path_for(path)), "row,dydt\n1,0.1\n2,-2.5\n3,0.3333333333333333\n");
  EXPECT_EQ(load_ddt_csv(ddt_path_for(path)), dydt);
}

TEST(Normalizer, PopulationSdConvention) {
  Dataset d;
  for (double v : {1.0, 2.0, 3.0})
    d.samples.push_back({v, {v, 2 * v, -v}, v * v, 0});
  const Normalizer n = fit_normalizer(d);
  const Dataset z = n.apply(d);
  const double k = std::sqrt(1.5);
  EXPECT_NEAR(z.samples[0].t, -k, 1e-15);
  EXPECT_EQ(z.samples[1].t, 0.0);
  EXPECT_NEAR(z.samples[2].t, k, 1e-15);
  EXPECT_NEAR(z.samples[2].t, 1.2247, 1e-4);
  EXPECT_NEAR(z.samples[0].e[2], k, 1e-15);
  EXPECT_EQ(z.samples[0].y, 0.0);
  EXPECT_EQ(z.samples[2].y, 1.0);
}

TEST(Normalizer, StandardizesTrainingSplit) {
  SynthSpec spec;
  spec.n = 500;
  const auto raw = synth_generate(spec).data;
  const Normalizer n = fit_normalizer(raw);
  const Dataset z = n.apply(raw);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0, s = 0;
    for (const auto &x : z.samples)
      m += (c == 0 ? x.t : x.e[c - 1]) / 500.0;
    for (const auto &x : z.samples) {
      const double d = (c == 0 ? x.t : x.e[c - 1]) - m;
      s += d * d / 500.0;
    }
    EXPECT_NEAR(m, 0.0, 1e-10);
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-10);
  }
  for (const auto &x : z.samples) {
    EXPECT_GE(x.y, 0.0);
    EXPECT_LE(x.y, 1.0);
    EXPECT_NEAR(n.invert_target(n.normalize_target(x.y)), x.y, 1e-12);
  }
}

TEST(Normalizer, ValidationTargetsMayLeaveUnitInterval) {
  Dataset train, valid;
  for (double v : {1.0, 2.0, 3.0})
    train.samples.push_back({v, {v, -v, v * v}, v, 0});
  valid.samples.push_back({0.0, {0, 0, 0}, 5.0, 1});
  valid.samples.push_back({0.0, {0, 0, 0}, -1.0, 1});
  const Dataset z = fit_normalizer(train).apply(valid);
  EXPECT_EQ(z.samples[0].y, 2.0);
  EXPECT_EQ(z.samples[1].y, -1.0);
}

TEST(Normalizer, ConstantColumnIsRejectedByName) {
  Dataset d;
  for (double v : {1.0, 2.0, 3.0})
    d.samples.push_back({v, {v, 4.0, -v}, v, 0});
  try {
    fit_normalizer(d);
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("sam_valence"), std::string::npos) << e.what();
  }
  EXPECT_THROW(fit_normalizer(Dataset{}), ConfigError);
}

TEST(Folds, TenSamplesFiveFolds) {
  const Dataset d = labelled(10, 5);
  const auto folds = stratified_kfold(d, 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto &f : folds) {
    ASSERT_EQ(f.valid.size(), 2u);
    EXPECT_EQ(d.samples[f.valid[0]].label + d.samples[f.valid[1]].label, 1);
    EXPECT_EQ(f.train.size(), 8u);
  }
}

TEST(Folds, PartitionAndProportionality) {
  const Dataset d = labelled(1013, 389);
  const auto folds = stratified_kfold(d, 5, 11);
  std::vector<int> seen(d.size(), 0);
  for (const auto &f : folds) {
    std::size_t pos = 0;
    for (auto i : f.valid) {
      ++seen[i];
      pos += static_cast<std::size_t>(d.samples[i].label);
    }
    EXPECT_LE(std::abs(static_cast<double>(pos) - 389.0 / 5.0), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(f.valid.size() - pos) - 624.0 / 5.0), 1.0);
    std::set<std::size_t> tr(f.train.begin(), f.train.end());
    EXPECT_EQ(tr.size() + f.valid.size(), d.size());
    for (auto i : f.valid)
      EXPECT_FALSE(tr.contains(i));
  }
  for (int c : seen)
    EXPECT_EQ(c, 1);
}

TEST(Folds, DeterministicAndSeedSensitive) {
  const Dataset d = labelled(100, 40);
  const auto a = stratified_kfold(d, 4, 9), b = stratified_kfold(d, 4, 9);
  const auto c = stratified_kfold(d, 4, 10);
  for (std::size_t f = 0; f < 4; ++f)
    EXPECT_EQ(a[f].valid, b[f].valid);
  bool differs = false;
  for (std::size_t f = 0; f < 4; ++f)
    differs = differs || a[f].valid != c[f].valid;
  EXPECT_TRUE(differs);
}

TEST(Folds, SmallClassIsAConfigError) {
  EXPECT_THROW(stratified_kfold(labelled(20, 3), 5, 1), ConfigError);
  EXPECT_THROW(stratified_kfold(labelled(20, 10), 1, 1), ConfigError);
}

// ---------------------------------------------------------------------------
// Synthetic benchmark and ODE oracle

TEST(Synth, ClosedFormAnchors) {
  const PhysicsParams p{1.0, {1.0, 0.0, 0.0}, 1.0, 0.0};
  const std::array<double, 3> e{1.0, 0.0, 0.0};
  EXPECT_EQ(analytic_eda(p, e, 0.7, 0.0), 0.7);
  EXPECT_NEAR(analytic_eda(p, e, 0.0, 50.0), 1.0, 1e-15);
  const double at_one = analytic_eda(p, e, 0.0, 1.0);
  EXPECT_NEAR(at_one, 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(at_one, 0.632121, 1e-6);
  const auto grid = uniform_grid(1.0, 1e-3);
  EXPECT_NEAR(rk4_integrate(p, e, 0.0, grid).back(), at_one, 1e-12);
}

TEST(Synth, NoiseFreeSamplesStartAtY0) {
  SynthSpec spec;
  spec.n = 50;
  spec.noise_sd = 0.0;
  spec.t_min = 0.0;
  spec.t_max = 1e-300;
  for (const auto &s : synth_generate(spec).data.samples)
    EXPECT_NEAR(s.y, spec.y0, 1e-12);
}

TEST(Synth, ResidualFreeAtTrueParameters) {
  SynthSpec spec;
  spec.n = 10000;
  spec.noise_sd = 0.0;
  const auto s = synth_generate(spec);
  ASSERT_EQ(s.data.size(), 10000u);
  Matrix e(s.data.size(), 3);
  std::vector<double> y;
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    y.push_back(s.data.samples[i].y);
    for (std::size_t k = 0; k < 3; ++k)
      e(i, k) = s.data.samples[i].e[k];
  }
  for (double r : physics_residual(s.dydt, y, e, spec.physics))
    ASSERT_LE(std::abs(r), 1e-10);
}

TEST(Synth, DeterministicAndLabelsMatchClusters) {
  SynthSpec spec;
  spec.n = 4000;
  const auto a = synth_generate(spec), b = synth_generate(spec);
  EXPECT_EQ(a.data.samples, b.data.samples);
  EXPECT_EQ(a.dydt, b.dydt);
  double pos = 0, arousal[2] = {0, 0}, count[2] = {0, 0};
  for (const auto &s : a.data.samples) {
    pos += s.label;
    arousal[s.label] += s.e[2];
    count[s.label] += 1;
    EXPECT_GE(s.t, spec.t_min);
    EXPECT_LE(s.t, spec.t_max);
  }
  EXPECT_NEAR(pos / 4000.0, spec.stress_fraction, 0.03);
  EXPECT_NEAR(arousal[1] / count[1], spec.stress_mean[2], 0.05);
  EXPECT_NEAR(arousal[0] / count[0], spec.nonstress_mean[2], 0.05);
}

TEST(Synth, InvalidSpecIsAConfigError) {
  SynthSpec spec;
  spec.physics.alpha0 = 0.0;
  EXPECT_THROW(synth_generate(spec), ConfigError);
  spec = {};
  spec.physics.gamma = -1.0;
  EXPECT_THROW(synth_generate(spec), ConfigError);
  spec = {};
  spec.noise_sd = -0.1;
  EXPECT_THROW(synth_generate(spec), ConfigError);
}

TEST(Synth, SeparationImprovesThresholdClassifier) {
  double previous = 0.0;
  for (double sep : {0.0, 0.5, 1.0, 2.0}) {
    SynthSpec spec;
    spec.n = 4000;
    spec.separation = sep;
    const auto d = synth_generate(spec).data;
    // Best single-feature threshold on arousal, by brute force.
    std::vector<std::pair<double, int>> v;
    for (const auto &s : d.samples)
      v.emplace_back(s.e[2], s.label);
    std::sort(v.begin(), v.end());
    std::size_t pos_total = 0;
    for (auto &[x, l] : v)
      pos_total += static_cast<std::size_t>(l);
    std::size_t neg_below = 0, pos_below = 0, best = 0;
    for (std::size_t i = 0; i <= v.size(); ++i) {
      best = std::max(best, neg_below + (pos_total - pos_below));
      if (i < v.size())
        (v[i].second ? pos_below : neg_below)++;
    }
    const double acc = static_cast<double>(best) / static_cast<double>(v.size());
    EXPECT_GE(acc, previous) << "separation " << sep;
    previous = acc;
  }
  EXPECT_GT(previous, 0.95);
}

TEST(Rk4, ZeroDynamicsStayConstant) {
  const auto grid = uniform_grid(1.0, 1e-2);
  for (double y : rk4_integrate(PhysicsParams{0.0, {0, 0, 0}, 1.0, 0.0}, {1, 2, 3}, 4.5, grid))
    EXPECT_EQ(y, 4.5);
}

namespace {

double max_error(const PhysicsParams &p, const std::array<double, 3> &e, double y0, double h) {
  const auto grid = uniform_grid(1.0, h);
  const auto y = rk4_integrate(p, e, y0, grid);
  const double b = p.beta[0] * e[0] + p.beta[1] * e[1] + p.beta[2] * e[2];
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double exact =
        b / p.alpha0 + (y0 - b / p.alpha0) * std::exp(-p.alpha0 * grid[i] / p.gamma);
    worst = std::max(worst, std::abs(y[i] - exact));
  }
  return worst;
}

} // namespace

TEST(Rk4, AgreesWithClosedForm) {
  const PhysicsParams unit{1.0, {0.5, 0.5, 0.5}, 1.0, 0.0};
  EXPECT_LE(max_error(unit, {1, 1, 1}, 0.0, 1e-3), 1e-8);
  // Uniform draws in [0.1, 10]. The 1e-8 bound holds when h*alpha0/gamma is
  // small; stiff draws near alpha0/gamma = 100 carry error up to a few 1e-7.
  Pcg32 rng(2024, 4);
  for (int d = 0; d < 200; ++d) {
    PhysicsParams p{rng.uniform(0.1, 10), {rng.uniform(0.1, 10), rng.uniform(0.1, 10),
                    rng.uniform(0.1, 10)}, rng.uniform(0.1, 10), 0.0};
    const std::array<double, 3> e{rng.uniform(0.1, 10), rng.uniform(0.1, 10), rng.uniform(0.1, 10)};
    const double err = max_error(p, e, rng.uniform(0.1, 10), 1e-3);
    EXPECT_LE(err, p.alpha0 / p.gamma <= 20.0 ? 1e-8 : 1e-6)
        << "alpha0 " << p.alpha0 << " gamma " << p.gamma;
  }
}

TEST(Rk4, FourthOrderConvergence) {
  // The halving ratio is measured where truncation error dominates rounding.
  const PhysicsParams mid{5.0, {1, 1, 1}, 0.5, 0.0};
  EXPECT_GE(max_error(mid, {1, 1, 1}, 3.0, 1e-2) / max_error(mid, {1, 1, 1}, 3.0, 5e-3), 12.0);
  const PhysicsParams fast{10.0, {1, 1, 1}, 0.1, 0.0};
  EXPECT_GE(max_error(fast, {1, 1, 1}, 10.0, 1e-3) / max_error(fast, {1, 1, 1}, 10.0, 5e-4), 12.0);
}

TEST(Rk4, RejectsBadGrids) {
  const PhysicsParams p;
  EXPECT_THROW(rk4_integrate(p, {1, 1, 1}, 0.0, std::vector<double>{0.0, 0.01, 0.01}),
               ContractViolation);
  EXPECT_THROW(rk4_integrate(p, {1, 1, 1}, 0.0, std::vector<double>{0.0, 0.5}), ContractViolation);
  EXPECT_THROW(rk4_integrate(p, {1, 1, 1}, 0.0, std::vector<double>{}), ContractViolation);
}
