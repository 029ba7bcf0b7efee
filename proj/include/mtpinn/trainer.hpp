#pragma once

// Adam, the per-batch training loop, fold and k-fold drivers, and recovery
// of the physics coefficients from trajectories.

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mtpinn/data.hpp"
#include "mtpinn/errors.hpp"
#include "mtpinn/metrics.hpp"
#include "mtpinn/model.hpp"
#include "mtpinn/objective.hpp"

namespace mtpinn {

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  ParamGrads first;  // m
  ParamGrads second; // v
  std::uint64_t step = 0;
};

inline AdamState make_adam(const ModelParams &m, const AdamConfig &cfg = {}) {
  return {cfg, zero_grads(m), zero_grads(m), 0};
}

/// One bias-corrected Adam update of every trainable block, in place.
inline void adam_step(AdamState &state, ModelParams &params, const ParamGrads &grads) {
  auto blocks = trainable_blocks(params);
  require(blocks.size() == grads.size() && state.first.size() == grads.size() &&
              state.second.size() == grads.size(),
          "adam_step: block count mismatch");
  ++state.step;
  const auto &c = state.config;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto data = blocks[b].data;
    const auto &g = grads[b];
    auto &m = state.first[b];
    auto &v = state.second[b];
    require(data.size() == g.size() && m.size() == g.size() && v.size() == g.size(),
            "adam_step: shape mismatch in block " + blocks[b].name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      data[i] -= c.lr * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + c.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Training configuration

enum class TrainVariant { full, no_physics, eda_only, emotion_only };

inline const char *to_string(TrainVariant v) {
  switch (v) {
  case TrainVariant::full: return "full";
  case TrainVariant::no_physics: return "no_physics";
  case TrainVariant::eda_only: return "eda_only";
  case TrainVariant::emotion_only: return "emotion_only";
  }
  return "?";
}

inline std::optional<TrainVariant> parse_variant(std::string_view s) {
  for (auto v : {TrainVariant::full, TrainVariant::no_physics, TrainVariant::eda_only,
                 TrainVariant::emotion_only})
    if (s == to_string(v))
      return v;
  return std::nullopt;
}

struct TrainRunConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  TrainVariant variant = TrainVariant::full;
  std::uint64_t seed = 42;
  AdamConfig adam;
  /// With variant emotion_only, also drop the physics term.
  bool emotion_only_no_physics = false;
};

inline void validate(const TrainRunConfig &c) {
  if (c.epochs < 1)
    throw ConfigError("train.epochs: must be >= 1");
  if (c.batch_size < 1)
    throw ConfigError("train.batch_size: must be >= 1");
  if (!(c.adam.lr > 0.0))
    throw ConfigError("train.lr: must be > 0");
}

/// eda_only drops l_emotion, emotion_only drops l_eda, no_physics forces
/// lambda to 0, full keeps all three.
inline LossWeights weights_for(const TrainRunConfig &c) {
  switch (c.variant) {
  case TrainVariant::full: return {1.0, 1.0, true};
  case TrainVariant::no_physics: return {1.0, 1.0, false};
  case TrainVariant::eda_only: return {1.0, 0.0, true};
  case TrainVariant::emotion_only: return {0.0, 1.0, !c.emotion_only_no_physics};
  }
  return {};
}

struct EpochTrace {
  std::size_t epoch = 0; // 1-based
  double l_eda = 0.0;
  double l_emotion = 0.0;
  double l_physics = 0.0;
  /// Effective physics weight after the epoch's last update (0 when the
  /// variant excludes the physics term).
  double lambda_eff = 0.0;
  double alpha0 = 0.0;
  std::array<double, 3> beta{};
  double gamma = 0.0;
};

struct TrainStreams {
  Pcg32 shuffle;
  Pcg32 dropout;
};

inline TrainStreams make_train_streams(std::uint64_t seed, std::uint64_t index = 0) {
  return {make_stream(seed, Stream::shuffle, index), make_stream(seed, Stream::dropout, index)};
}

/// One pass over `data` (already normalized): seeded shuffle, contiguous
/// batches with the short final batch kept, and an Adam step per batch.
/// Loss means in the trace are weighted by batch size.
inline EpochTrace train_epoch(ModelParams &params, AdamState &opt, const Dataset &data,
                              const TrainRunConfig &cfg, TrainStreams &streams,
                              std::size_t epoch_index = 1,
                              const Dataset *raw_for_physics = nullptr) {
  require(!data.empty(), "train_epoch: empty dataset");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  streams.shuffle.shuffle(order);

  const LossWeights w = weights_for(cfg);
  EpochTrace trace;
  trace.epoch = epoch_index;
  std::size_t batch_no = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    std::span<const std::size_t> idx(order.data() + start, end - start);
    const SampleBatch batch =
        make_batch(data, idx, params.config.physics_raw_features ? raw_for_physics : nullptr);
    LossGradient lg;
    try {
      lg = loss_and_gradient(params, batch, w, Mode::train, streams.dropout);
      if (!std::isfinite(lg.loss.total))
        throw NumericDomainError("non-finite loss");
    } catch (const NumericDomainError &e) {
      throw NumericDomainError("epoch " + std::to_string(epoch_index) + ", batch " +
                               std::to_string(batch_no) + ": " + e.what());
    }
    update_running_stats(params, lg.preds);
    adam_step(opt, params, lg.grads);
    const double share = static_cast<double>(idx.size());
    trace.l_eda += share * lg.loss.l_eda;
    trace.l_emotion += share * lg.loss.l_emotion;
    trace.l_physics += share * lg.loss.l_physics;
  }
  const double n = static_cast<double>(data.size());
  trace.l_eda /= n;
  trace.l_emotion /= n;
  trace.l_physics /= n;
  trace.lambda_eff = w.physics ? params.lambda_eff() : 0.0;
  trace.alpha0 = params.physics.alpha0;
  trace.beta = params.physics.beta;
  trace.gamma = params.physics.gamma;
  return trace;
}

// ---------------------------------------------------------------------------
// Folds

struct FoldReport {
  std::size_t fold = 0; // 1-based
  TrainVariant variant = TrainVariant::full;
  RegressionMetrics regression;
  ClassificationMetrics classification;
  PhysicsParams physics;
  double lambda_eff = 0.0;
  /// Mean squared physics residual of the final model on the validation split.
  double valid_physics_loss = 0.0;
  std::vector<EpochTrace> traces;
  ModelParams model;
};

struct Evaluation {
  RegressionMetrics regression;
  ClassificationMetrics classification;
  double physics_loss = 0.0;
};

/// Eval-mode metrics of `m` on a normalized dataset.
inline Evaluation evaluate(const ModelParams &m, const Dataset &normalized,
                           const Dataset *raw_for_physics = nullptr) {
  std::vector<std::size_t> idx(normalized.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = i;
  const SampleBatch batch =
      make_batch(normalized, idx, m.config.physics_raw_features ? raw_for_physics : nullptr);
  const Predictions p = predict(m, batch);
  Evaluation ev;
  ev.regression = regression_metrics(p.eda, batch.target);
  ev.classification = classification_metrics(p.prob, batch.label, m.config.threshold);
  ev.physics_loss =
      physics_loss(physics_residual(p.eda_rate, p.eda, batch.physics_features, m.physics));
  return ev;
}

/// Trains on `train` and evaluates on `valid`; both are raw (un-normalized).
/// The normalizer is fitted on `train` only.
inline FoldReport run_fold(const Dataset &train, const Dataset &valid, const TrainRunConfig &cfg,
                           const ModelConfig &model_cfg, std::size_t fold_index = 1) {
  validate(cfg);
  ModelParams params = init_model(model_cfg);
  params.normalizer = fit_normalizer(train);
  const Dataset train_n = params.normalizer.apply(train);
  const Dataset valid_n = params.normalizer.apply(valid);

  AdamState opt = make_adam(params, cfg.adam);
  TrainStreams streams = make_train_streams(cfg.seed, fold_index);
  FoldReport report;
  report.fold = fold_index;
  report.variant = cfg.variant;
  for (std::size_t e = 1; e <= cfg.epochs; ++e)
    report.traces.push_back(train_epoch(params, opt, train_n, cfg, streams, e, &train));

  const Evaluation ev = evaluate(params, valid_n, &valid);
  report.regression = ev.regression;
  report.classification = ev.classification;
  report.valid_physics_loss = ev.physics_loss;
  report.physics = params.physics;
  report.lambda_eff = weights_for(cfg).physics ? params.lambda_eff() : 0.0;
  report.model = std::move(params);
  return report;
}

/// Runs `count` independent jobs on up to `threads` workers; the first
/// exception is rethrown after all workers stop.
template <typename Job> void parallel_for(std::size_t count, std::size_t threads, Job job) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i)
      job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count)
          return;
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error)
            error = std::current_exception();
          next = count;
        }
      }
    });
  for (auto &th : pool)
    th.join();
  if (error)
    std::rethrow_exception(error);
}

/// Stratified k-fold cross-validation; reports are ordered by fold.
inline std::vector<FoldReport> run_kfold(const Dataset &data, std::size_t k,
                                         const TrainRunConfig &cfg, const ModelConfig &model_cfg,
                                         std::size_t threads = 1) {
  validate(cfg);
  validate(model_cfg);
  const auto splits = stratified_kfold(data, k, cfg.seed);
  std::vector<FoldReport> reports(k);
  parallel_for(k, threads, [&](std::size_t f) {
    reports[f] = run_fold(data.subset(splits[f].train), data.subset(splits[f].valid), cfg,
                          model_cfg, f + 1);
  });
  return reports;
}

// ---------------------------------------------------------------------------
// Physics-parameter recovery

struct TrajectoryPoint {
  double t = 0.0;
  std::array<double, 3> e{};
  double y = 0.0;
  double dydt = 0.0;
};

struct RecoveryOptions {
  std::size_t max_steps = 5000;
  /// Converged once the gradient's max-norm falls below this, relative to the
  /// gradient at the starting point.
  double relative_grad_tol = 1e-12;
  /// Also converged once the gradient's max-norm is below this absolute level.
  double absolute_grad_tol = 1e-12;
};

struct RecoveryResult {
  PhysicsParams params;
  bool converged = false;
  std::size_t steps = 0;
  double final_loss = 0.0;
  double grad_norm = 0.0;
  std::string diagnostic;
};

/// Minimizes the mean squared residual over (alpha0, beta) with gamma held at
/// `gauge_gamma`, starting from `init`. Uses heavy-ball gradient descent with
/// step size and momentum tuned from the extreme eigenvalues of the
/// (constant) Hessian.
inline RecoveryResult recover_physics(std::span<const TrajectoryPoint> traj, double gauge_gamma,
                                      const PhysicsParams &init, const RecoveryOptions &opt = {}) {
  require(traj.size() >= 4, "recover_physics: need at least 4 trajectory points");
  require(std::isfinite(gauge_gamma), "recover_physics: gauge gamma must be finite");
  const double n = static_cast<double>(traj.size());

  // Residual r = x.theta - gamma*dydt' with x = (y, -e1, -e2, -e3), theta = (alpha0, beta).
  using Vec4 = std::array<double, 4>;
  auto features = [](const TrajectoryPoint &p) { return Vec4{p.y, -p.e[0], -p.e[1], -p.e[2]}; };
  std::array<Vec4, 4> hess{};
  for (const auto &p : traj) {
    const Vec4 x = features(p);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        hess[i][j] += 2.0 * x[i] * x[j] / n;
  }
  auto hess_mul = [&](const Vec4 &v) {
    Vec4 o{};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        o[i] += hess[i][j] * v[j];
    return o;
  };
  auto power_iteration = [&](auto apply) {
    Vec4 v{1.0, 0.5, -0.25, 0.125};
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
      Vec4 w = apply(v);
      double norm = 0.0;
      for (double x : w)
        norm += x * x;
      norm = std::sqrt(norm);
      if (norm == 0.0)
        return 0.0;
      for (int i = 0; i < 4; ++i)
        v[i] = w[i] / norm;
      lambda = norm;
    }
    return lambda;
  };
  const double l_max = power_iteration(hess_mul);
  require(l_max > 0.0, "recover_physics: degenerate trajectory (zero Hessian)");
  const double l_min = std::max(
      l_max - power_iteration([&](const Vec4 &v) {
        Vec4 h = hess_mul(v);
        for (int i = 0; i < 4; ++i)
          h[i] = l_max * v[i] - h[i];
        return h;
      }),
      l_max * 1e-12);
  const double sl = std::sqrt(l_max), sm = std::sqrt(l_min);
  const double step = 4.0 / ((sl + sm) * (sl + sm));
  const double momentum = ((sl - sm) / (sl + sm)) * ((sl - sm) / (sl + sm));

  auto gradient = [&](const Vec4 &theta, double *loss) {
    Vec4 g{};
    double l = 0.0;
    for (const auto &p : traj) {
      const Vec4 x = features(p);
      double r = gauge_gamma * p.dydt;
      for (int i = 0; i < 4; ++i)
        r += x[i] * theta[i];
      l += r * r;
      for (int i = 0; i < 4; ++i)
        g[i] += 2.0 * r * x[i] / n;
    }
    if (loss)
      *loss = l / n;
    return g;
  };
  auto max_abs = [](const Vec4 &v) {
    double m = 0.0;
    for (double x : v)
      m = std::max(m, std::abs(x));
    return m;
  };

  Vec4 theta{init.alpha0, init.beta[0], init.beta[1], init.beta[2]};
  Vec4 prev = theta;
  RecoveryResult res;
  double loss = 0.0;
  Vec4 g = gradient(theta, &loss);
  const double g0 = max_abs(g);
  const double tol = std::max(opt.relative_grad_tol * g0, opt.absolute_grad_tol);
  while (res.steps < opt.max_steps && max_abs(g) > tol) {
    const Vec4 before = theta;
    for (int i = 0; i < 4; ++i)
      theta[i] = theta[i] - step * g[i] + momentum * (theta[i] - prev[i]);
    prev = before;
    ++res.steps;
    g = gradient(theta, &loss);
    if (!std::isfinite(loss))
      break;
  }
  res.params = PhysicsParams{theta[0], {theta[1], theta[2], theta[3]}, gauge_gamma, init.rho};
  res.final_loss = loss;
  res.grad_norm = max_abs(g);
  res.converged = std::isfinite(loss) && res.grad_norm <= tol;
  if (!res.converged)
    res.diagnostic = "no convergence after " + std::to_string(res.steps) +
                     " steps: loss " + std::to_string(loss) + ", gradient max-norm " +
                     std::to_string(res.grad_norm) + " (tolerance " + std::to_string(tol) +
                     "), Hessian condition number " + std::to_string(l_max / l_min);
  return res;
}

inline std::vector<TrajectoryPoint> trajectory_from(const SynthData &s) {
  std::vector<TrajectoryPoint> out;
  out.reserve(s.data.size());
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const auto &x = s.data.samples[i];
    out.push_back({x.t, x.e, x.y, s.dydt[i]});
  }
  return out;
}

} // namespace mtpinn
