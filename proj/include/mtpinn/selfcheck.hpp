#pragma once

// Self-check suites run by `mtpinn check`: each compares the library against
// an independent oracle (finite differences, closed-form ODE solution, direct
// least-squares solve, brute-force recount) and reports a pass flag.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtpinn/baselines.hpp"
#include "mtpinn/data.hpp"
#include "mtpinn/gradcheck.hpp"
#include "mtpinn/metrics.hpp"
#include "mtpinn/objective.hpp"
#include "mtpinn/trainer.hpp"

namespace mtpinn {

struct SuiteResult {
  std::string name;
  bool pass = false;
  /// Headline number of the suite (worst error, worst deviation).
  double value = 0.0;
  std::string detail;
  double seconds = 0.0;
};

namespace selfcheck {

inline SuiteResult gradient(std::uint64_t seed) {
  ModelConfig mc;
  mc.hidden = {8, 8};
  mc.seed = seed;
  const ModelParams net = init_model(mc);
  SynthSpec spec;
  spec.n = 16;
  spec.seed = seed;
  const Dataset raw = synth_generate(spec).data;
  const SampleBatch batch = make_batch(fit_normalizer(raw).apply(raw));
  const auto rep = check_gradients(net, batch, 1e-5, 1e-6);
  return {"gradient", rep.pass, rep.max_rel_error,
          "max relative error " + format_double(rep.max_rel_error) + " in " + rep.worst_block +
              " (tolerance 1e-6, h = 1e-5)"};
}

/// Eval-mode dEDA/dt from the tangent channel against central differences in t.
inline SuiteResult tangent(std::uint64_t seed) {
  ModelConfig mc;
  mc.seed = seed;
  const ModelParams net = init_model(mc);
  SynthSpec spec;
  spec.n = 100;
  spec.seed = seed;
  const Dataset raw = synth_generate(spec).data;
  const SampleBatch batch = make_batch(fit_normalizer(raw).apply(raw));
  const Predictions base = predict(net, batch);
  const double h = 1e-5;
  SampleBatch up = batch, down = batch;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    up.inputs(i, 0) += h;
    down.inputs(i, 0) -= h;
  }
  const auto yu = predict(net, up).eda, yd = predict(net, down).eda;
  double worst = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double fd = (yu[i] - yd[i]) / (2.0 * h);
    const double a = base.eda_rate[i];
    worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8}));
  }
  return {"tangent", worst <= 1e-5, worst,
          "max relative error " + format_double(worst) + " over 100 samples (tolerance 1e-5)"};
}

inline double rk4_max_error(const PhysicsParams &p, const std::array<double, 3> &e, double y0,
                            double step, double *y_scale = nullptr) {
  const auto grid = uniform_grid(1.0, step);
  const auto y = rk4_integrate(p, e, y0, grid);
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    worst = std::max(worst, std::abs(y[i] - analytic_eda(p, e, y0, grid[i])));
    scale = std::max(scale, std::abs(y[i]));
  }
  if (y_scale)
    *y_scale = scale;
  return worst;
}

/// RK4 against the closed form on 20 random draws. The step-halving ratio is
/// only meaningful above the rounding floor, so it is checked on draws whose
/// truncation error clears that floor plus one fixed fast-decay case.
inline SuiteResult ode(std::uint64_t seed) {
  Pcg32 rng = make_stream(seed, Stream::synth, 0x0de);
  double worst = 0.0, worst_ratio = 1e300;
  std::size_t ratio_cases = 0;
  auto ratio_check = [&](const PhysicsParams &p, const std::array<double, 3> &e, double y0) {
    double scale = 0.0;
    const double coarse = rk4_max_error(p, e, y0, 1e-3, &scale);
    if (coarse < 1e-9 * std::max(scale, 1.0))
      return;
    worst_ratio = std::min(worst_ratio, coarse / rk4_max_error(p, e, y0, 5e-4));
    ++ratio_cases;
  };
  for (int d = 0; d < 20; ++d) {
    PhysicsParams p;
    p.alpha0 = rng.uniform(0.1, 10.0);
    for (double &b : p.beta)
      b = rng.uniform(0.1, 10.0);
    p.gamma = rng.uniform(0.1, 10.0);
    std::array<double, 3> e{};
    for (double &v : e)
      v = rng.uniform(0.1, 10.0);
    const double y0 = rng.uniform(0.1, 10.0);
    worst = std::max(worst, rk4_max_error(p, e, y0, 1e-3));
    ratio_check(p, e, y0);
  }
  ratio_check(PhysicsParams{10.0, {1.0, 1.0, 1.0}, 0.1, 0.0}, {1.0, 1.0, 1.0}, 10.0);
  const bool pass = worst <= 1e-8 && ratio_cases > 0 && worst_ratio >= 12.0;
  return {"ode", pass, worst,
          "max abs error " + format_double(worst) + " at step 1e-3 (tolerance 1e-8); worst "
              "halving ratio " + format_double(worst_ratio) + " over " +
              std::to_string(ratio_cases) + " case(s) (need >= 12)"};
}

inline SuiteResult residual_free(std::uint64_t seed) {
  SynthSpec spec;
  spec.n = 10000;
  spec.noise_sd = 0.0;
  spec.seed = seed;
  const SynthData s = synth_generate(spec);
  double worst = 0.0;
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const auto &x = s.data.samples[i];
    const double r = spec.physics.gamma * s.dydt[i] + spec.physics.alpha0 * x.y -
                     drive(spec.physics, x.e);
    worst = std::max(worst, std::abs(r));
  }
  return {"residual_free", worst <= 1e-10, worst,
          "max |residual| " + format_double(worst) + " over 10000 noise-free samples "
              "(tolerance 1e-10)"};
}

/// Least-squares (alpha0, beta) for fixed gamma from the normal equations of
/// the linear residual gamma*y' + alpha0*y - beta^T e.
inline std::array<double, 4> least_squares_physics(std::span<const TrajectoryPoint> traj,
                                                   double gamma) {
  Matrix x(traj.size(), 4);
  std::vector<double> target(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    x(i, 0) = traj[i].y;
    for (std::size_t k = 0; k < 3; ++k)
      x(i, k + 1) = -traj[i].e[k];
    target[i] = -gamma * traj[i].dydt;
  }
  const auto ne = ridge_normal_equations(x, target, 0.0, false);
  const auto w = solve_dense(ne.lhs, ne.rhs);
  return {w[0], w[1], w[2], w[3]};
}

inline SuiteResult recovery(std::uint64_t seed) {
  SynthSpec spec;
  spec.n = 500;
  spec.noise_sd = 0.0;
  spec.seed = seed;
  const auto traj = trajectory_from(synth_generate(spec));
  const auto oracle = least_squares_physics(traj, spec.physics.gamma);
  PhysicsParams init = spec.physics;
  init.alpha0 *= 1.5;
  for (double &b : init.beta)
    b *= 1.5;
  const auto res = recover_physics(traj, spec.physics.gamma, init);
  const std::array<double, 4> got{res.params.alpha0, res.params.beta[0], res.params.beta[1],
                                  res.params.beta[2]};
  double worst = 0.0;
  for (std::size_t k = 0; k < 4; ++k)
    worst = std::max(worst, std::abs(got[k] - oracle[k]) / std::abs(oracle[k]));
  return {"recovery", worst <= 0.01, worst,
          "max relative deviation from the least-squares oracle " + format_double(worst) +
              " after " + std::to_string(res.steps) + " steps (tolerance 0.01)" +
              (res.diagnostic.empty() ? "" : "; " + res.diagnostic)};
}

/// Classification metrics against a brute-force recount and rmse^2 against mse.
inline SuiteResult metric_oracles(std::uint64_t seed) {
  Pcg32 rng = make_stream(seed, Stream::synth, 0x3e7);
  std::size_t mismatches = 0;
  double worst_cross = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> prob(n), pred(n), target(n);
    std::vector<int> label(n);
    for (std::size_t i = 0; i < n; ++i) {
      prob[i] = rng.uniform();
      label[i] = static_cast<int>(rng.below(2));
      pred[i] = rng.normal();
      target[i] = rng.normal();
    }
    const auto m = classification_metrics(prob, label, 0.5);
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pos = !(prob[i] < 0.5);
      tp += pos && label[i] == 1;
      fp += pos && label[i] == 0;
      fn += !pos && label[i] == 1;
      tn += !pos && label[i] == 0;
    }
    const double acc = static_cast<double>(tp + tn) / static_cast<double>(n);
    const double prec = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    if (m.confusion.tp != tp || m.confusion.tn != tn || m.confusion.fp != fp ||
        m.confusion.fn != fn || m.accuracy != acc || m.precision != prec || m.recall != rec ||
        m.f1 != f1)
      ++mismatches;
    const double rmse = regression_metrics(pred, target).rmse;
    worst_cross = std::max(worst_cross, std::abs(rmse * rmse - mse(pred, target)));
  }
  const bool pass = mismatches == 0 && worst_cross <= 1e-12;
  return {"metric_oracles", pass, worst_cross,
          std::to_string(mismatches) + " of 200 instances disagree with the recount; max "
              "|rmse^2 - mse| " + format_double(worst_cross) + " (tolerance 1e-12)"};
}

inline SuiteResult stratification(std::uint64_t seed) {
  Pcg32 rng = make_stream(seed, Stream::folds, 0x57a);
  double worst = 0.0;
  for (int d = 0; d < 50; ++d) {
    const std::size_t n = 20 + rng.below(481);
    const std::size_t k = 2 + rng.below(9);
    Dataset data;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      s.label = rng.uniform() < 0.35 ? 1 : 0;
      pos += static_cast<std::size_t>(s.label);
      data.samples.push_back(s);
    }
    if (pos < k || n - pos < k) {
      --d;
      continue;
    }
    for (const auto &f : stratified_kfold(data, k, rng.next())) {
      std::size_t fold_pos = 0;
      for (auto i : f.valid)
        fold_pos += static_cast<std::size_t>(data.samples[i].label);
      const double kd = static_cast<double>(k);
      worst = std::max({worst, std::abs(static_cast<double>(fold_pos) - static_cast<double>(pos) / kd),
                        std::abs(static_cast<double>(f.valid.size() - fold_pos) -
                                 static_cast<double>(n - pos) / kd)});
    }
  }
  return {"stratification", worst <= 1.0, worst,
          "max class-count deviation from proportional " + format_double(worst) +
              " over 50 datasets (tolerance 1)"};
}

} // namespace selfcheck

/// Runs every suite in a fixed order.
inline std::vector<SuiteResult> run_self_checks(std::uint64_t seed) {
  using Suite = std::function<SuiteResult(std::uint64_t)>;
  const std::vector<Suite> suites{selfcheck::gradient,       selfcheck::tangent,
                                  selfcheck::ode,            selfcheck::residual_free,
                                  selfcheck::recovery,       selfcheck::metric_oracles,
                                  selfcheck::stratification};
  std::vector<SuiteResult> out;
  for (const auto &suite : suites) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteResult r = suite(seed);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

} // namespace mtpinn
