#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mtpinn/model.hpp"
#include "mtpinn/objective.hpp"

namespace mtpinn {

struct BlockError {
  std::string block;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<BlockError> blocks;
  double max_rel_error = 0.0;
  std::string worst_block;
  bool pass = false;
};

/// Largest per-coordinate relative error |a - f| / max(|a|, |f|, 1e-8) in a block.
inline double block_relative_error(std::span<const double> analytic,
                                   std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], f = numeric[i];
    worst = std::max(worst, std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-8}));
  }
  return worst;
}

/// Compares `analytic` against central differences of the train-mode objective
/// of `net`. Dropout masks are frozen by replaying `mask_seed` on every
/// evaluation.
inline GradCheckReport compare_gradients(const ModelParams &net, const SampleBatch &batch,
                                         const ParamGrads &analytic, double step, double tol,
                                         const LossWeights &w = {}, std::uint64_t mask_seed = 7) {
  require(batch.size() >= 2, "check_gradients: batch size must be >= 2");
  const Pcg32 frozen = make_stream(mask_seed, Stream::dropout);
  auto loss_at = [&](const ModelParams &m) {
    Pcg32 rng = frozen;
    auto preds = forward(m, batch, Mode::train, rng);
    return total_loss(preds, batch, m.physics, m.config.lambda_floor, w).total;
  };

  GradCheckReport report;
  ModelParams work = net;
  auto blocks = trainable_blocks(work);
  require(blocks.size() == analytic.size(), "check_gradients: gradient block count mismatch");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    require(blocks[b].data.size() == analytic[b].size(), "check_gradients: block size mismatch");
    std::vector<double> numeric(blocks[b].data.size());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double orig = blocks[b].data[i];
      blocks[b].data[i] = orig + step;
      const double up = loss_at(work);
      blocks[b].data[i] = orig - step;
      const double down = loss_at(work);
      blocks[b].data[i] = orig;
      numeric[i] = (up - down) / (2.0 * step);
    }
    const double err = block_relative_error(analytic[b], numeric);
    report.blocks.push_back({blocks[b].name, err});
    if (err >= report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_block = blocks[b].name;
    }
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

inline ParamGrads analytic_gradient(const ModelParams &net, const SampleBatch &batch,
                                    const LossWeights &w = {}, std::uint64_t mask_seed = 7) {
  Pcg32 rng = make_stream(mask_seed, Stream::dropout);
  return loss_and_gradient(net, batch, w, Mode::train, rng).grads;
}

inline GradCheckReport check_gradients(const ModelParams &net, const SampleBatch &batch,
                                       double step, double tol) {
  return compare_gradients(net, batch, analytic_gradient(net, batch), step, tol);
}

} // namespace mtpinn
