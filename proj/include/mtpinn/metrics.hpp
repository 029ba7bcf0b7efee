#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>

#include "mtpinn/errors.hpp"

namespace mtpinn {

struct RegressionMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  /// Empty when the target (or prediction) is constant.
  std::optional<double> pearson_r;
};

struct Confusion {
  std::size_t tn = 0, fp = 0, fn = 0, tp = 0;

  std::size_t total() const noexcept { return tn + fp + fn + tp; }
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Confusion confusion;
  /// Set when a denominator was zero and the metric was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "pearson: need two equal-length vectors, n >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0))
    return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline RegressionMetrics regression_metrics(std::span<const double> pred,
                                            std::span<const double> target) {
  require(pred.size() == target.size() && pred.size() >= 2,
          "regression_metrics: need equal lengths >= 2");
  RegressionMetrics m;
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    se += d * d;
    ae += std::abs(d);
  }
  const double n = static_cast<double>(pred.size());
  m.rmse = std::sqrt(se / n);
  m.mae = ae / n;
  m.pearson_r = pearson(pred, target);
  return m;
}

/// Predicted positive iff prob >= threshold. Precision/recall with a zero
/// denominator are reported as 0 and flagged.
inline ClassificationMetrics classification_metrics(std::span<const double> prob,
                                                    std::span<const int> label,
                                                    double threshold = 0.5) {
  require(prob.size() == label.size(), "classification_metrics: length mismatch");
  require(threshold > 0.0 && threshold < 1.0, "classification_metrics: threshold outside (0, 1)");
  ClassificationMetrics m;
  auto &c = m.confusion;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    require(label[i] == 0 || label[i] == 1, "classification_metrics: label outside {0, 1}");
    const bool pos = prob[i] >= threshold;
    if (label[i] == 1)
      (pos ? c.tp : c.fn)++;
    else
      (pos ? c.fp : c.tn)++;
  }
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.precision_undefined = c.tp + c.fp == 0;
  m.recall_undefined = c.tp + c.fn == 0;
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

/// Row-normalized confusion: entry [true][pred] is the share of samples of
/// that true class predicted as `pred`. Rows of an absent class stay zero.
inline std::array<std::array<double, 2>, 2> row_normalized(const Confusion &c) {
  std::array<std::array<double, 2>, 2> out{};
  const double neg = static_cast<double>(c.tn + c.fp);
  const double pos = static_cast<double>(c.fn + c.tp);
  if (neg > 0) {
    out[0][0] = static_cast<double>(c.tn) / neg;
    out[0][1] = static_cast<double>(c.fp) / neg;
  }
  if (pos > 0) {
    out[1][0] = static_cast<double>(c.fn) / pos;
    out[1][1] = static_cast<double>(c.tp) / pos;
  }
  return out;
}

} // namespace mtpinn
