#pragma once

// Linear comparators for the ablation table: closed-form ridge regression for
// EDA and full-batch logistic regression for the emotional state.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mtpinn/data.hpp"
#include "mtpinn/errors.hpp"
#include "mtpinn/io.hpp"
#include "mtpinn/matrix.hpp"
#include "mtpinn/metrics.hpp"
#include "mtpinn/objective.hpp"

namespace mtpinn {

struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 0.0;

  double decision(std::span<const double> x) const {
    require(x.size() == weights.size(), "LinearModel: feature count mismatch");
    double acc = intercept;
    for (std::size_t j = 0; j < x.size(); ++j)
      acc += weights[j] * x[j];
    return acc;
  }
};

/// Solves a * x = b by Gaussian elimination with partial pivoting. Throws
/// NumericDomainError when a pivot falls below 1e-12 of the largest entry.
inline std::vector<double> solve_dense(Matrix a, std::vector<double> b) {
  const std::size_t n = a.rows();
  require(a.cols() == n && b.size() == n, "solve_dense: shape mismatch");
  double scale = 0.0;
  for (double v : a.values())
    scale = std::max(scale, std::abs(v));
  if (scale == 0.0)
    throw NumericDomainError("solve_dense: singular system (zero matrix)");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col)))
        piv = r;
    if (std::abs(a(piv, col)) <= 1e-12 * scale)
      throw NumericDomainError("solve_dense: singular or ill-conditioned system (pivot " +
                               std::to_string(a(piv, col)) + " at column " +
                               std::to_string(col) + ")");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j)
        std::swap(a(col, j), a(piv, j));
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      if (f == 0.0)
        continue;
      for (std::size_t j = col; j < n; ++j)
        a(r, j) -= f * a(col, j);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j)
      acc -= a(i, j) * x[j];
    x[i] = acc / a(i, i);
  }
  return x;
}

namespace detail {

struct CenteredDesign {
  Matrix x;
  std::vector<double> y;
  std::vector<double> x_mean;
  double y_mean = 0.0;
};

inline CenteredDesign center(const Matrix &x, std::span<const double> y, bool fit_intercept) {
  CenteredDesign d{x, std::vector<double>(y.begin(), y.end()),
                   std::vector<double>(x.cols(), 0.0), 0.0};
  if (!fit_intercept)
    return d;
  const double n = static_cast<double>(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c)
      d.x_mean[c] += x(r, c) / n;
  for (double v : y)
    d.y_mean += v / n;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c)
      d.x(r, c) -= d.x_mean[c];
    d.y[r] -= d.y_mean;
  }
  return d;
}

} // namespace detail

/// Gram matrix X^T X + lambda I and right-hand side X^T y of the ridge normal
/// equations on the (centered, when fitting an intercept) design.
struct NormalEquations {
  Matrix lhs;
  std::vector<double> rhs;
};

inline NormalEquations ridge_normal_equations(const Matrix &x, std::span<const double> y,
                                              double lambda, bool fit_intercept = true) {
  const auto d = detail::center(x, y, fit_intercept);
  const std::size_t p = x.cols();
  NormalEquations ne{Matrix(p, p), std::vector<double>(p, 0.0)};
  add_matmul_at(d.x, d.x, ne.lhs);
  for (std::size_t j = 0; j < p; ++j)
    ne.lhs(j, j) += lambda;
  for (std::size_t r = 0; r < d.x.rows(); ++r)
    for (std::size_t j = 0; j < p; ++j)
      ne.rhs[j] += d.x(r, j) * d.y[r];
  return ne;
}

/// Minimizes |y - Xw - b|^2 + lambda |w|^2 exactly; the intercept b is not
/// penalized.
inline LinearModel ridge_fit(const Matrix &x, std::span<const double> y, double lambda,
                             bool fit_intercept = true) {
  require(x.rows() == y.size() && x.rows() >= 1, "ridge_fit: shape mismatch");
  require(lambda >= 0.0, "ridge_fit: lambda must be >= 0");
  if (lambda == 0.0 && x.rows() < x.cols())
    throw ConfigError("ridge_fit: fewer rows than columns requires lambda > 0");
  auto ne = ridge_normal_equations(x, y, lambda, fit_intercept);
  LinearModel m;
  m.lambda = lambda;
  try {
    m.weights = solve_dense(ne.lhs, ne.rhs);
  } catch (const NumericDomainError &e) {
    throw NumericDomainError(std::string("ridge_fit: normal equations are singular with lambda = ") +
                             format_double(lambda) + " (" + e.what() + ")");
  }
  if (fit_intercept) {
    const auto d = detail::center(x, y, true);
    m.intercept = d.y_mean;
    for (std::size_t j = 0; j < m.weights.size(); ++j)
      m.intercept -= m.weights[j] * d.x_mean[j];
  }
  return m;
}

/// Full-batch gradient descent on mean BCE with a sigmoid link, from zero.
inline LinearModel logistic_fit(const Matrix &x, std::span<const int> labels, std::size_t steps,
                                double lr) {
  require(x.rows() == labels.size() && x.rows() >= 1, "logistic_fit: shape mismatch");
  for (int l : labels)
    require(l == 0 || l == 1, "logistic_fit: label outside {0, 1}");
  const std::size_t n = x.rows(), p = x.cols();
  LinearModel m;
  m.weights.assign(p, 0.0);
  std::vector<double> gw(p);
  for (std::size_t s = 0; s < steps; ++s) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double err = logistic(m.decision(x.row(r))) - labels[r];
      for (std::size_t j = 0; j < p; ++j)
        gw[j] += err * x(r, j);
      gb += err;
    }
    for (std::size_t j = 0; j < p; ++j)
      m.weights[j] -= lr * gw[j] / static_cast<double>(n);
    m.intercept -= lr * gb / static_cast<double>(n);
  }
  return m;
}

inline std::vector<double> predict_linear(const LinearModel &m, const Matrix &x) {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    out[r] = m.decision(x.row(r));
  return out;
}

inline std::vector<double> predict_proba(const LinearModel &m, const Matrix &x) {
  auto out = predict_linear(m, x);
  for (double &v : out)
    v = logistic(v);
  return out;
}

/// Mean BCE of a logistic model, for monitoring descent.
inline double logistic_loss(const LinearModel &m, const Matrix &x, std::span<const int> labels) {
  return bce(predict_proba(m, x), labels);
}

struct BaselineConfig {
  double ridge_lambda = 1e-3;
  std::size_t logistic_steps = 2000;
  double logistic_lr = 0.1;
};

struct BaselineFold {
  RegressionMetrics ridge;
  ClassificationMetrics logistic;
};

/// Fits both baselines on every fold's training split (normalized with that
/// split's statistics, as for the network) and scores the validation split.
inline std::vector<BaselineFold> run_baselines(const Dataset &data,
                                               const std::vector<FoldSplit> &folds,
                                               const BaselineConfig &cfg = {},
                                               double threshold = 0.5) {
  std::vector<BaselineFold> out;
  for (const auto &f : folds) {
    const Dataset train_raw = data.subset(f.train);
    const Normalizer norm = fit_normalizer(train_raw);
    const SampleBatch train = make_batch(norm.apply(train_raw));
    const SampleBatch valid = make_batch(norm.apply(data.subset(f.valid)));
    const auto ridge = ridge_fit(train.inputs, train.target, cfg.ridge_lambda);
    const auto logit = logistic_fit(train.inputs, train.label, cfg.logistic_steps, cfg.logistic_lr);
    out.push_back({regression_metrics(predict_linear(ridge, valid.inputs), valid.target),
                   classification_metrics(predict_proba(logit, valid.inputs), valid.label,
                                          threshold)});
  }
  return out;
}

} // namespace mtpinn
