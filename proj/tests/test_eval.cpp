#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mtpinn/objective.hpp"
#include "mtpinn/report.hpp"
#include "test_util.hpp"

using namespace mtpinn;

namespace {

using Vec = std::vector<double>;
using Labels = std::vector<int>;

FoldReport fake_fold(std::size_t fold, double rmse, double f1, std::optional<double> r) {
  FoldReport f;
  f.fold = fold;
  f.regression.rmse = rmse;
  f.regression.mae = rmse / 2;
  f.regression.pearson_r = r;
  f.classification.accuracy = 0.5 + rmse;
  f.classification.precision = f1;
  f.classification.recall = f1;
  f.classification.f1 = f1;
  f.classification.confusion = {30, 10, 5, 15};
  f.physics = {1.0 + rmse, {0.1, 0.2, 0.3}, 1.0, 0.0};
  return f;
}

std::vector<std::string> lines(const std::string &text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    out.push_back(l);
  return out;
}

} // namespace

TEST(RegressionMetrics, Examples) {
  const auto id = regression_metrics(Vec{1, 2, 3}, Vec{1, 2, 3});
  EXPECT_EQ(id.rmse, 0.0);
  EXPECT_EQ(id.mae, 0.0);
  EXPECT_EQ(id.pearson_r, 1.0);
  const auto m = regression_metrics(Vec{1, 3, 2, 4}, Vec{1, 2, 3, 4});
  ASSERT_TRUE(m.pearson_r);
  EXPECT_NEAR(*m.pearson_r, 0.8, 1e-15);
  const auto neg = regression_metrics(Vec{-1, -3, -2, -4}, Vec{1, 2, 3, 4});
  EXPECT_NEAR(*neg.pearson_r, -0.8, 1e-15);
  EXPECT_FALSE(regression_metrics(Vec{1, 2, 3}, Vec{5, 5, 5}).pearson_r);
  EXPECT_FALSE(regression_metrics(Vec{2, 2}, Vec{1, 3}).pearson_r);
  EXPECT_THROW(regression_metrics(Vec{1}, Vec{1}), ContractViolation);
}

TEST(ClassificationMetrics, Examples) {
  const auto perfect = classification_metrics(Vec{0.9, 0.1, 0.9, 0.1}, Labels{1, 0, 1, 0});
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);

  const auto half = classification_metrics(Vec{1, 1, 0, 0}, Labels{1, 0, 1, 0});
  EXPECT_EQ(half.precision, 0.5);
  EXPECT_EQ(half.recall, 0.5);
  EXPECT_EQ(half.f1, 0.5);
  EXPECT_EQ(half.accuracy, 0.5);

  const auto none = classification_metrics(Vec{0.1, 0.2, 0.3}, Labels{1, 0, 1});
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_TRUE(none.precision_undefined);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_FALSE(none.recall_undefined);
  EXPECT_EQ(none.f1, 0.0);

  // Ties at the threshold are positive.
  EXPECT_EQ(classification_metrics(Vec{0.5}, Labels{1}).recall, 1.0);
  EXPECT_EQ(classification_metrics(Vec{0.7}, Labels{1}, 0.7).recall, 1.0);
  EXPECT_THROW(classification_metrics(Vec{0.5}, Labels{1}, 1.0), ContractViolation);
}

TEST(MetricProperties, MatchBruteForceOnRandomInstances) {
  Pcg32 rng(8, 8);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + rng.below(60);
    Vec prob(n), pred(n), target(n);
    Labels label(n);
    for (std::size_t i = 0; i < n; ++i) {
      prob[i] = rng.uniform();
      label[i] = static_cast<int>(rng.below(2));
      pred[i] = rng.normal();
      target[i] = rng.normal();
    }
    const double thr = rng.uniform(0.05, 0.95);
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = prob[i] >= thr;
      tp += p && label[i] == 1;
      fp += p && label[i] == 0;
      fn += !p && label[i] == 1;
      tn += !p && label[i] == 0;
    }
    const auto c = classification_metrics(prob, label, thr);
    EXPECT_EQ(c.confusion.tp, tp);
    EXPECT_EQ(c.confusion.fp, fp);
    EXPECT_EQ(c.confusion.fn, fn);
    EXPECT_EQ(c.confusion.tn, tn);
    const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    EXPECT_EQ(c.accuracy, double(tp + tn) / double(n));
    EXPECT_EQ(c.precision, prec);
    EXPECT_EQ(c.recall, rec);
    EXPECT_EQ(c.f1, prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0);

    double se = 0, ae = 0;
    for (std::size_t i = 0; i < n; ++i) {
      se += (pred[i] - target[i]) * (pred[i] - target[i]);
      ae += std::abs(pred[i] - target[i]);
    }
    const auto r = regression_metrics(pred, target);
    EXPECT_EQ(r.rmse, std::sqrt(se / double(n)));
    EXPECT_EQ(r.mae, ae / double(n));
    EXPECT_NEAR(r.rmse * r.rmse, mse(pred, target), 1e-12);
  }
}

TEST(MetricProperties, PearsonIsAffineInvariant) {
  Pcg32 rng(9, 9);
  for (int trial = 0; trial < 50; ++trial) {
    Vec x(30), y(30), xa(30), ya(30);
    const double a = rng.uniform(0.1, 10), b = rng.uniform(-5, 5);
    const double c = rng.uniform(0.1, 10), d = rng.uniform(-5, 5);
    for (std::size_t i = 0; i < 30; ++i) {
      x[i] = rng.normal();
      y[i] = 0.5 * x[i] + rng.normal();
      xa[i] = a * x[i] + b;
      ya[i] = c * y[i] + d;
    }
    EXPECT_NEAR(*pearson(xa, ya), *pearson(x, y), 1e-12);
  }
}

TEST(MetricProperties, RaisingThresholdNeverIncreasesRecall) {
  Pcg32 rng(10, 10);
  for (int trial = 0; trial < 50; ++trial) {
    Vec prob(40);
    Labels label(40);
    for (std::size_t i = 0; i < 40; ++i) {
      prob[i] = rng.uniform();
      label[i] = static_cast<int>(rng.below(2));
    }
    double previous = 2.0;
    for (double thr = 0.01; thr < 1.0; thr += 0.01) {
      const double rec = classification_metrics(prob, label, thr).recall;
      EXPECT_LE(rec, previous);
      previous = rec;
    }
  }
}

// ---------------------------------------------------------------------------
// Aggregation and tables

TEST(Aggregate, SingleFoldMeanEqualsFold) {
  const auto rows = aggregate_folds({fake_fold(1, 0.03, 0.8, 0.97)});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].label, "Mean");
  EXPECT_EQ(rows[1].rmse, rows[0].rmse);
  EXPECT_EQ(rows[1].f1, rows[0].f1);
  EXPECT_EQ(rows[1].pearson_r, rows[0].pearson_r);
}

TEST(Aggregate, TwoFoldMean) {
  const auto rows = aggregate_folds({fake_fold(1, 0.02, 0.8, 0.9), fake_fold(2, 0.04, 0.6, 0.8)});
  EXPECT_NEAR(rows[2].rmse, 0.03, 1e-15);
  EXPECT_NEAR(rows[2].f1, 0.7, 1e-15);
  EXPECT_NEAR(*rows[2].pearson_r, 0.85, 1e-15);
}

TEST(Aggregate, MeansMatchIndependentPass) {
  Pcg32 rng(12, 1);
  std::vector<FoldReport> folds;
  for (std::size_t f = 1; f <= 7; ++f)
    folds.push_back(fake_fold(f, rng.uniform(0, 0.1), rng.uniform(), rng.uniform(0.9, 1)));
  const auto rows = aggregate_folds(folds);
  ASSERT_EQ(rows.size(), 8u);
  double rmse = 0, mae = 0, acc = 0, f1 = 0, r = 0;
  for (const auto &f : folds) {
    rmse += f.regression.rmse;
    mae += f.regression.mae;
    acc += f.classification.accuracy;
    f1 += f.classification.f1;
    r += *f.regression.pearson_r;
  }
  EXPECT_NEAR(rows.back().rmse, rmse / 7, 1e-15);
  EXPECT_NEAR(rows.back().mae, mae / 7, 1e-15);
  EXPECT_NEAR(rows.back().accuracy, acc / 7, 1e-15);
  EXPECT_NEAR(rows.back().f1, f1 / 7, 1e-15);
  EXPECT_NEAR(*rows.back().pearson_r, r / 7, 1e-15);
  for (std::size_t f = 0; f < 7; ++f)
    EXPECT_EQ(rows[f].label, std::to_string(f + 1));
}

TEST(Aggregate, UndefinedValuesAreFlagged) {
  FoldReport a = fake_fold(1, 0.02, 0.0, std::nullopt);
  a.classification.precision_undefined = true;
  const auto rows = aggregate_folds({a, fake_fold(2, 0.04, 0.5, 0.9)});
  EXPECT_NE(rows[0].notes.find("r_undefined"), std::string::npos);
  EXPECT_NE(rows[0].notes.find("precision_undefined"), std::string::npos);
  EXPECT_EQ(*rows[2].pearson_r, 0.9);
  EXPECT_NE(rows[2].notes.find("r_mean_over_defined_folds"), std::string::npos);
  const auto csv = lines(metrics_csv(rows));
  EXPECT_EQ(csv[1].substr(0, 12), "1,0.02,0.01,");
  EXPECT_NE(csv[1].find(",NA,"), std::string::npos);
}

TEST(Tables, CsvLayouts) {
  FoldReport a = fake_fold(1, 0.02, 0.8, 0.9);
  a.traces = {{1, 0.5, 0.6, 0.7, 0.1, 1, {}, 1}, {2, 0.25, 0.3, 0.35, 0.09, 1, {}, 1}};
  const std::vector<FoldReport> folds{a, fake_fold(2, 0.04, 0.6, 0.8)};
  const auto m = lines(metrics_csv(aggregate_folds(folds)));
  ASSERT_EQ(m.size(), 4u);
  EXPECT_EQ(m[0], "fold,eda_rmse,eda_mae,pearson_r,accuracy,precision,recall,f1,notes");
  EXPECT_EQ(m[1], "1,0.02,0.01,0.9,0.52,0.8,0.8,0.8,");
  EXPECT_EQ(m[3].substr(0, 5), "Mean,");

  const auto c = lines(curves_csv(folds));
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0], "epoch,fold,l_eda,l_emotion,l_physics,lambda_eff");
  EXPECT_EQ(c[2], "2,1,0.25,0.3,0.35,0.09");

  const auto p = lines(params_csv(folds));
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0], "fold,alpha0,beta1,beta2,beta3,gamma");
  EXPECT_EQ(p[1], "1,1.02,0.1,0.2,0.3,1");

  // Confusion {tn 30, fp 10, fn 5, tp 15} in both folds.
  const auto cm = mean_normalized_confusion(folds);
  EXPECT_EQ(cm[0][0], 0.75);
  EXPECT_EQ(cm[0][1], 0.25);
  EXPECT_EQ(cm[1][0], 0.25);
  EXPECT_EQ(cm[1][1], 0.75);
  EXPECT_EQ(confusion_csv(cm), "true_label,pred_0,pred_1\n0,0.75,0.25\n1,0.25,0.75\n");
}

TEST(Tables, AbsentClassLeavesRowZero) {
  const auto m = row_normalized(Confusion{4, 1, 0, 0});
  EXPECT_EQ(m[0][0], 0.8);
  EXPECT_EQ(m[1][0], 0.0);
  EXPECT_EQ(m[1][1], 0.0);
}

// ---------------------------------------------------------------------------
// Ablation

namespace {

Dataset ablation_data(double noise = 0.01) {
  SynthSpec spec;
  spec.n = 400;
  spec.noise_sd = noise;
  return synth_generate(spec).data;
}

TrainRunConfig quick_train(std::size_t epochs = 5) {
  TrainRunConfig cfg;
  cfg.epochs = epochs;
  return cfg;
}

ModelConfig quick_model() {
  ModelConfig mc;
  mc.hidden = {16, 16};
  return mc;
}

} // namespace

TEST(Ablation, EdaOnlyReportsZeroF1) {
  const auto res = ablation_table(ablation_data(), {"eda_only"}, quick_model(), quick_train(), 2);
  ASSERT_EQ(res.rows.size(), 1u);
  EXPECT_EQ(res.rows[0].variant, "eda_only");
  EXPECT_EQ(res.rows[0].emotion_f1, 0.0);
  EXPECT_EQ(res.rows[0].notes, "no_trained_classifier");
  EXPECT_TRUE(res.rows[0].eda_rmse);
}

TEST(Ablation, UnknownVariantIsAConfigError) {
  try {
    ablation_table(ablation_data(), {"full", "no_phyiscs"}, quick_model(), quick_train(), 2);
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("no_phyiscs"), std::string::npos) << e.what();
  }
}

TEST(Ablation, BaselineRowsFollowTheTableLayout) {
  const auto res =
      ablation_table(ablation_data(), {"ridge", "logistic"}, quick_model(), quick_train(), 5);
  ASSERT_EQ(res.rows.size(), 2u);
  EXPECT_TRUE(res.rows[0].eda_rmse);
  EXPECT_EQ(res.rows[0].emotion_f1, 0.0);
  EXPECT_FALSE(res.rows[1].eda_rmse);
  EXPECT_FALSE(res.rows[1].pearson_r);
  EXPECT_GT(res.rows[1].emotion_f1, 0.0);
  EXPECT_LT(res.rows[1].emotion_f1, 1.0);
  const auto csv = lines(ablation_csv(res.rows));
  EXPECT_EQ(csv[0], "variant,eda_rmse,emotion_f1,pearson_r,physics_loss,notes");
  EXPECT_EQ(csv[2].substr(0, 12), "logistic,NA,");
  EXPECT_EQ(lines(comparison_csv(res.rows)).size(), 1u);
}

TEST(Ablation, PhysicsTermLowersTheResidual) {
  // Residual-free data: the full variant learns a consistent (y, dy/dt, phys)
  // triple, no_physics leaves the physics parameters untouched.
  const auto res = ablation_table(ablation_data(0.0), {"full", "no_physics"}, quick_model(),
                                  quick_train(30), 2, 2);
  ASSERT_EQ(res.rows.size(), 2u);
  ASSERT_TRUE(res.rows[0].physics_loss && res.rows[1].physics_loss);
  EXPECT_LE(*res.rows[0].physics_loss, *res.rows[1].physics_loss);
  EXPECT_EQ(lines(comparison_csv(res.rows)).size(), 3u);
}
