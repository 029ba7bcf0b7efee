#pragma once

// Supervised losses, the physics residual, and the composite objective
//   total = w_eda * l_eda + w_emotion * l_emotion + lambda_eff * l_physics.

#include <cmath>
#include <span>
#include <vector>

#include "mtpinn/errors.hpp"
#include "mtpinn/model.hpp"
#include "mtpinn/physics.hpp"

namespace mtpinn {

inline double mse(std::span<const double> pred, std::span<const double> target) {
  require(!pred.empty(), "mse: empty input");
  require(pred.size() == target.size(), "mse: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

/// Mean binary cross-entropy; probabilities are clamped to [1e-7, 1 - 1e-7].
inline double bce(std::span<const double> prob, std::span<const int> label) {
  require(!prob.empty(), "bce: empty input");
  require(prob.size() == label.size(), "bce: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    require(label[i] == 0 || label[i] == 1, "bce: label outside {0, 1}");
    const double p = std::clamp(prob[i], kProbClamp, 1.0 - kProbClamp);
    acc -= label[i] == 1 ? std::log(p) : std::log1p(-p);
  }
  return acc / static_cast<double>(prob.size());
}

/// r_i = gamma * rate_i + alpha0 * y_i - beta^T e_i, with `e` n x 3.
inline std::vector<double> physics_residual(std::span<const double> rate,
                                            std::span<const double> y, const Matrix &e,
                                            const PhysicsParams &p) {
  require(rate.size() == y.size() && e.rows() == y.size() && e.cols() == 3,
          "physics_residual: shape mismatch");
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    r[i] = p.gamma * rate[i] + p.alpha0 * y[i] -
           (p.beta[0] * e(i, 0) + p.beta[1] * e(i, 1) + p.beta[2] * e(i, 2));
  return r;
}

inline double physics_loss(std::span<const double> residual) {
  require(!residual.empty(), "physics_loss: empty residual");
  double acc = 0.0;
  for (double r : residual)
    acc += r * r;
  return acc / static_cast<double>(residual.size());
}

/// Which terms enter the optimized objective; see TrainVariant.
struct LossWeights {
  double eda = 1.0;
  double emotion = 1.0;
  bool physics = true;
};

/// All three components are always evaluated; `total` applies the weights.
struct LossBreakdown {
  double l_eda = 0.0;
  double l_emotion = 0.0;
  double l_physics = 0.0;
  double lambda_eff = 0.0;
  double total = 0.0;
};

inline LossBreakdown total_loss(const Predictions &preds, const SampleBatch &batch,
                                const PhysicsParams &phys, double lambda_floor,
                                const LossWeights &w = {}) {
  require(preds.size() == batch.size(), "total_loss: prediction/batch size mismatch");
  LossBreakdown out;
  out.l_eda = mse(preds.eda, batch.target);
  out.l_emotion = bce(preds.prob, batch.label);
  out.l_physics =
      physics_loss(physics_residual(preds.eda_rate, preds.eda, batch.physics_features, phys));
  out.lambda_eff = w.physics ? effective_lambda(phys, lambda_floor) : 0.0;
  out.total = w.eda * out.l_eda + w.emotion * out.l_emotion + out.lambda_eff * out.l_physics;
  return out;
}

struct LossGradient {
  LossBreakdown loss;
  ParamGrads grads;
  Predictions preds;
};

/// Forward, objective and full reverse pass, including the physics blocks.
inline LossGradient loss_and_gradient(const ModelParams &m, const SampleBatch &batch,
                                      const LossWeights &w, Mode mode, Pcg32 &rng) {
  LossGradient out;
  out.preds = forward(m, batch, mode, rng);
  const Predictions &p = out.preds;
  out.loss = total_loss(p, batch, m.physics, m.config.lambda_floor, w);

  const std::size_t n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double lam = out.loss.lambda_eff;
  const auto &phys = m.physics;
  const auto residual = physics_residual(p.eda_rate, p.eda, batch.physics_features, phys);

  std::vector<double> adj_eda(n), adj_rate(n), adj_prob(n);
  double d_alpha = 0.0, d_gamma = 0.0;
  std::array<double, 3> d_beta{};
  for (std::size_t i = 0; i < n; ++i) {
    const double r2 = 2.0 * residual[i] * inv_n * lam;
    adj_eda[i] = w.eda * 2.0 * (p.eda[i] - batch.target[i]) * inv_n + r2 * phys.alpha0;
    adj_rate[i] = r2 * phys.gamma;
    const double q = p.prob_raw[i];
    if (w.emotion != 0.0 && q > kProbClamp && q < 1.0 - kProbClamp) {
      const double y = batch.label[i];
      adj_prob[i] = w.emotion * inv_n * (-y / q + (1.0 - y) / (1.0 - q));
    }
    d_alpha += r2 * p.eda[i];
    d_gamma += r2 * p.eda_rate[i];
    for (std::size_t k = 0; k < 3; ++k)
      d_beta[k] -= r2 * batch.physics_features(i, k);
  }
  out.grads = model_backward(m, p, adj_eda, adj_rate, adj_prob);

  const std::size_t base = out.grads.size() - (m.config.lambda_frozen ? 3 : 4);
  out.grads[base][0] = d_alpha;
  std::copy(d_beta.begin(), d_beta.end(), out.grads[base + 1].begin());
  out.grads[base + 2][0] = d_gamma;
  if (!m.config.lambda_frozen && w.physics && softplus(phys.rho) > m.config.lambda_floor)
    out.grads[base + 3][0] = out.loss.l_physics * logistic(phys.rho);
  return out;
}

} // namespace mtpinn
