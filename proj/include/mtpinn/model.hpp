#pragma once

// Two-branch, two-head network: [t | e] -> (Dense -> BatchNorm -> Swish ->
// Dropout) x L -> {EDA head (linear), emotion head (sigmoid)}.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mtpinn/autodiff.hpp"
#include "mtpinn/data.hpp"
#include "mtpinn/errors.hpp"
#include "mtpinn/physics.hpp"
#include "mtpinn/rng.hpp"

namespace mtpinn {

inline constexpr std::size_t kInputWidth = 4; // 1 time + 3 emotion features
inline constexpr double kProbClamp = 1e-7;

struct ModelConfig {
  std::vector<std::size_t> hidden{64, 64};
  double dropout = 0.1;
  double bn_epsilon = 1e-5;
  /// running = momentum * running + (1 - momentum) * batch
  double bn_momentum = 0.9;
  std::uint64_t seed = 42;
  double threshold = 0.5;
  double lambda_floor = 1e-3;
  bool lambda_frozen = false;
  /// Use un-normalized emotion features in the physics residual.
  bool physics_raw_features = false;

  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

inline void validate(const ModelConfig &c) {
  if (c.hidden.empty())
    throw ConfigError("model.hidden: at least one hidden layer is required");
  for (auto w : c.hidden)
    if (w < 1)
      throw ConfigError("model.hidden: widths must be >= 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0))
    throw ConfigError("model.dropout: must lie in [0, 1)");
  if (!(c.bn_epsilon > 0.0))
    throw ConfigError("model.bn_epsilon: must be > 0");
  if (!(c.bn_momentum >= 0.0 && c.bn_momentum <= 1.0))
    throw ConfigError("model.bn_momentum: must lie in [0, 1]");
  if (!(c.threshold > 0.0 && c.threshold < 1.0))
    throw ConfigError("model.threshold: must lie in (0, 1)");
  if (!(c.lambda_floor >= 0.0) || !std::isfinite(c.lambda_floor))
    throw ConfigError("model.lambda_floor: must be >= 0");
}

struct DenseLayer {
  Matrix weight; // in x out
  Matrix bias;   // 1 x out, empty for hidden layers (batch-norm shift replaces it)

  friend bool operator==(const DenseLayer &, const DenseLayer &) = default;
};

struct NormLayer {
  Matrix scale, shift, running_mean, running_var; // each 1 x width

  friend bool operator==(const NormLayer &, const NormLayer &) = default;
};

struct ModelParams {
  ModelConfig config;
  std::vector<DenseLayer> hidden;
  std::vector<NormLayer> norms;
  DenseLayer eda_head;
  DenseLayer emotion_head;
  PhysicsParams physics;
  Normalizer normalizer;

  double lambda_eff() const { return effective_lambda(physics, config.lambda_floor); }

  friend bool operator==(const ModelParams &, const ModelParams &) = default;
};

inline Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Pcg32 &rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double &v : w.values())
    v = rng.uniform(-limit, limit);
  return w;
}

inline ModelParams init_model(const ModelConfig &config) {
  validate(config);
  Pcg32 rng = make_stream(config.seed, Stream::init);
  ModelParams m;
  m.config = config;
  std::size_t in = kInputWidth;
  for (auto width : config.hidden) {
    m.hidden.push_back({glorot_uniform(in, width, rng), Matrix()});
    m.norms.push_back({Matrix(1, width, 1.0), Matrix(1, width, 0.0), Matrix(1, width, 0.0),
                       Matrix(1, width, 1.0)});
    in = width;
  }
  m.eda_head = {glorot_uniform(in, 1, rng), Matrix(1, 1)};
  m.emotion_head = {glorot_uniform(in, 1, rng), Matrix(1, 1)};
  m.physics = PhysicsParams{1.0, {0.1, 0.1, 0.1}, 1.0, softplus_inverse(0.1)};
  return m;
}

// ---------------------------------------------------------------------------
// Trainable parameter blocks

template <typename T> struct BasicParamBlock {
  std::string name;
  std::span<T> data;
};
using ParamBlock = BasicParamBlock<double>;
using ConstParamBlock = BasicParamBlock<const double>;

/// Gradient storage aligned with trainable_blocks().
using ParamGrads = std::vector<std::vector<double>>;

namespace detail {
template <typename Params, typename Block> std::vector<Block> blocks_of(Params &m) {
  std::vector<Block> out;
  for (std::size_t l = 0; l < m.hidden.size(); ++l) {
    const auto id = std::to_string(l);
    out.push_back({"hidden" + id + ".weight", m.hidden[l].weight.values()});
    out.push_back({"norm" + id + ".scale", m.norms[l].scale.values()});
    out.push_back({"norm" + id + ".shift", m.norms[l].shift.values()});
  }
  out.push_back({"eda_head.weight", m.eda_head.weight.values()});
  out.push_back({"eda_head.bias", m.eda_head.bias.values()});
  out.push_back({"emotion_head.weight", m.emotion_head.weight.values()});
  out.push_back({"emotion_head.bias", m.emotion_head.bias.values()});
  out.push_back({"physics.alpha0", {&m.physics.alpha0, 1}});
  out.push_back({"physics.beta", {m.physics.beta.data(), 3}});
  out.push_back({"physics.gamma", {&m.physics.gamma, 1}});
  if (!m.config.lambda_frozen)
    out.push_back({"physics.rho", {&m.physics.rho, 1}});
  return out;
}
} // namespace detail

/// Every trainable parameter, grouped by block. Batch-norm running statistics
/// are not trainable; rho is omitted when lambda is frozen.
inline std::vector<ParamBlock> trainable_blocks(ModelParams &m) {
  return detail::blocks_of<ModelParams, ParamBlock>(m);
}
inline std::vector<ConstParamBlock> trainable_blocks(const ModelParams &m) {
  return detail::blocks_of<const ModelParams, ConstParamBlock>(m);
}

inline ParamGrads zero_grads(const ModelParams &m) {
  ParamGrads g;
  for (const auto &b : trainable_blocks(m))
    g.emplace_back(b.data.size(), 0.0);
  return g;
}

inline std::size_t block_index(const ModelParams &m, std::string_view name) {
  auto blocks = trainable_blocks(m);
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].name == name)
      return i;
  throw ContractViolation("no trainable block named " + std::string(name));
}

// ---------------------------------------------------------------------------
// Forward / backward

struct Predictions {
  std::vector<double> eda;      // y-hat
  std::vector<double> eda_rate; // d(y-hat)/dt
  std::vector<double> prob;     // clamped to [1e-7, 1 - 1e-7]
  std::vector<double> prob_raw; // sigmoid output before clamping
  std::vector<PrimitiveCache> caches;
  Mode mode = Mode::eval;

  std::size_t size() const noexcept { return eda.size(); }
};

namespace detail {

inline void check_layer(const DualBatch &b, const std::string &where) {
  if (!b.value.all_finite() || !b.tangent.all_finite())
    throw NumericDomainError("non-finite activations after " + where);
}

inline std::vector<Matrix> params_of(const DenseLayer &d) {
  if (d.bias.empty())
    return {d.weight};
  return {d.weight, d.bias};
}

inline std::vector<Matrix> params_of(const NormLayer &n) {
  return {n.scale, n.shift, n.running_mean, n.running_var};
}

} // namespace detail

/// Forward pass from explicit dual inputs: `time` is n x 1, `emotion` n x 3.
inline Predictions forward_dual(const ModelParams &m, const DualBatch &time,
                                const DualBatch &emotion, Mode mode, Pcg32 &rng) {
  require(time.width() == 1 && emotion.width() == 3, "forward: input widths must be 1 and 3");
  require(time.batch() >= 1 && time.batch() == emotion.batch(), "forward: empty or ragged batch");
  Predictions p;
  p.mode = mode;
  auto joined = dual_concat(time, emotion);
  DualBatch act = std::move(joined.output);
  p.caches.push_back(std::move(joined.cache));

  auto run = [&](const PrimitiveSpec &spec, const std::vector<Matrix> &params,
                 const std::string &where) {
    auto f = dual_forward(spec, params, act, mode, rng);
    detail::check_layer(f.output, where);
    act = std::move(f.output);
    p.caches.push_back(std::move(f.cache));
  };

  const auto &cfg = m.config;
  for (std::size_t l = 0; l < m.hidden.size(); ++l) {
    const std::string id = "hidden layer " + std::to_string(l + 1);
    run({Primitive::affine}, detail::params_of(m.hidden[l]), id + " (affine)");
    run({Primitive::batch_norm, 0.0, cfg.bn_epsilon}, detail::params_of(m.norms[l]),
        id + " (batch_norm)");
    run({Primitive::swish}, {}, id + " (swish)");
    run({Primitive::dropout, cfg.dropout}, {}, id + " (dropout)");
  }
  const DualBatch shared = act;

  run({Primitive::affine}, detail::params_of(m.eda_head), "eda head (affine)");
  run({Primitive::identity}, {}, "eda head (identity)");
  const DualBatch eda = std::move(act);

  act = shared;
  run({Primitive::affine}, detail::params_of(m.emotion_head), "emotion head (affine)");
  run({Primitive::sigmoid}, {}, "emotion head (sigmoid)");

  const std::size_t n = time.batch();
  p.eda.resize(n);
  p.eda_rate.resize(n);
  p.prob.resize(n);
  p.prob_raw.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.eda[i] = eda.value(i, 0);
    p.eda_rate[i] = eda.tangent(i, 0);
    p.prob_raw[i] = act.value(i, 0);
    p.prob[i] = std::clamp(act.value(i, 0), kProbClamp, 1.0 - kProbClamp);
  }
  return p;
}

/// Splits the batch into the time branch (tangent 1) and emotion branch
/// (tangent `emotion_tangent`, normally 0).
inline Predictions forward(const ModelParams &m, const SampleBatch &batch, Mode mode, Pcg32 &rng,
                           double emotion_tangent = 0.0) {
  require(batch.size() >= 1 && batch.inputs.cols() == kInputWidth,
          "forward: batch must be nonempty with 4 input columns");
  const std::size_t n = batch.size();
  DualBatch time(column_slice(batch.inputs, 0, 1), Matrix(n, 1, 1.0));
  DualBatch emotion(column_slice(batch.inputs, 1, 3), Matrix(n, 3, emotion_tangent));
  return forward_dual(m, time, emotion, mode, rng);
}

/// Eval-mode forward; consumes no randomness.
inline Predictions predict(const ModelParams &m, const SampleBatch &batch) {
  Pcg32 unused;
  return forward(m, batch, Mode::eval, unused);
}

/// Reverse pass through the caches of `preds`. Adjoints are per-sample
/// dL/d(y-hat), dL/d(dy-hat/dt) and dL/d(p raw). Physics blocks are left zero.
inline ParamGrads model_backward(const ModelParams &m, const Predictions &preds,
                                 std::span<const double> adj_eda,
                                 std::span<const double> adj_eda_rate,
                                 std::span<const double> adj_prob) {
  const std::size_t n = preds.size();
  require(adj_eda.size() == n && adj_eda_rate.size() == n && adj_prob.size() == n,
          "model_backward: adjoint length mismatch");
  const std::size_t layers = m.hidden.size();
  require(preds.caches.size() == 1 + 4 * layers + 4, "model_backward: cache count mismatch");

  ParamGrads grads = zero_grads(m);
  auto store = [&](std::size_t block, const Matrix &g) {
    auto &dst = grads.at(block);
    require(dst.size() == g.size(), "model_backward: gradient block size mismatch");
    std::copy(g.values().begin(), g.values().end(), dst.begin());
  };
  const std::size_t eda_w = 3 * layers;

  std::size_t ci = preds.caches.size();
  auto step = [&](const Matrix &av, const Matrix &at) {
    --ci;
    return dual_backward(preds.caches[ci].kind, preds.caches[ci], av, at);
  };

  // Emotion head: sigmoid then affine.
  Matrix av(n, 1), at(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    av(i, 0) = adj_prob[i];
  auto b = step(av, at);
  b = step(b.adj_value, b.adj_tangent);
  store(eda_w + 2, b.adj_params[0]);
  store(eda_w + 3, b.adj_params[1]);
  Matrix shared_v = std::move(b.adj_value);
  Matrix shared_t = std::move(b.adj_tangent);

  // EDA head: identity then affine.
  for (std::size_t i = 0; i < n; ++i) {
    av(i, 0) = adj_eda[i];
    at(i, 0) = adj_eda_rate[i];
  }
  b = step(av, at);
  b = step(b.adj_value, b.adj_tangent);
  store(eda_w, b.adj_params[0]);
  store(eda_w + 1, b.adj_params[1]);
  add_inplace(shared_v, b.adj_value);
  add_inplace(shared_t, b.adj_tangent);

  for (std::size_t l = layers; l-- > 0;) {
    b = step(shared_v, shared_t);       // dropout
    b = step(b.adj_value, b.adj_tangent); // swish
    b = step(b.adj_value, b.adj_tangent); // batch_norm
    store(3 * l + 1, b.adj_params[0]);
    store(3 * l + 2, b.adj_params[1]);
    b = step(b.adj_value, b.adj_tangent); // affine
    store(3 * l, b.adj_params[0]);
    shared_v = std::move(b.adj_value);
    shared_t = std::move(b.adj_tangent);
  }
  require(ci == 1 && preds.caches[0].kind == Primitive::concat,
          "model_backward: cache order mismatch");
  return grads;
}

/// Folds the batch statistics of a train-mode forward into the running
/// statistics used by eval mode.
inline void update_running_stats(ModelParams &m, const Predictions &preds) {
  if (preds.mode != Mode::train)
    return;
  const double mom = m.config.bn_momentum;
  for (std::size_t l = 0; l < m.norms.size(); ++l) {
    const PrimitiveCache &c = preds.caches.at(1 + 4 * l + 1);
    require(c.kind == Primitive::batch_norm, "update_running_stats: cache order mismatch");
    auto &norm = m.norms[l];
    for (std::size_t j = 0; j < c.mean.size(); ++j) {
      norm.running_mean(0, j) = mom * norm.running_mean(0, j) + (1.0 - mom) * c.mean[j];
      norm.running_var(0, j) = mom * norm.running_var(0, j) + (1.0 - mom) * c.var[j];
    }
  }
}

} // namespace mtpinn
