#pragma once

// Fold aggregation, the ablation harness, and the CSV tables written by the
// command-line tool. Cells that do not apply to a row are written as "NA";
// zero-denominator metrics are written as 0 and flagged in the notes column.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mtpinn/baselines.hpp"
#include "mtpinn/errors.hpp"
#include "mtpinn/io.hpp"
#include "mtpinn/metrics.hpp"
#include "mtpinn/trainer.hpp"

namespace mtpinn {

struct MetricsRow {
  std::string label; // "1".."k" or "Mean"
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> pearson_r;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::string notes;
};

namespace detail {

inline void append_note(std::string &notes, std::string_view note) {
  if (!notes.empty())
    notes += ';';
  notes += note;
}

inline std::string cell(const std::optional<double> &v) {
  return v ? format_double(*v) : std::string("NA");
}

inline std::string classification_notes(const ClassificationMetrics &c) {
  std::string notes;
  if (c.precision_undefined)
    append_note(notes, "precision_undefined");
  if (c.recall_undefined)
    append_note(notes, "recall_undefined");
  return notes;
}

} // namespace detail

/// Per-fold rows in fold order followed by a "Mean" row. The mean of r is
/// taken over folds where r is defined.
inline std::vector<MetricsRow> aggregate_folds(const std::vector<FoldReport> &reports) {
  require(!reports.empty(), "aggregate_folds: no fold reports");
  std::vector<MetricsRow> rows;
  MetricsRow mean;
  mean.label = "Mean";
  double r_sum = 0.0;
  std::size_t r_count = 0;
  for (const auto &f : reports) {
    MetricsRow row{std::to_string(f.fold),
                   f.regression.rmse,
                   f.regression.mae,
                   f.regression.pearson_r,
                   f.classification.accuracy,
                   f.classification.precision,
                   f.classification.recall,
                   f.classification.f1,
                   detail::classification_notes(f.classification)};
    if (!row.pearson_r)
      detail::append_note(row.notes, "r_undefined");
    mean.rmse += row.rmse;
    mean.mae += row.mae;
    mean.accuracy += row.accuracy;
    mean.precision += row.precision;
    mean.recall += row.recall;
    mean.f1 += row.f1;
    if (row.pearson_r) {
      r_sum += *row.pearson_r;
      ++r_count;
    }
    rows.push_back(std::move(row));
  }
  const double k = static_cast<double>(reports.size());
  mean.rmse /= k;
  mean.mae /= k;
  mean.accuracy /= k;
  mean.precision /= k;
  mean.recall /= k;
  mean.f1 /= k;
  if (r_count > 0)
    mean.pearson_r = r_sum / static_cast<double>(r_count);
  if (r_count < reports.size())
    detail::append_note(mean.notes, "r_mean_over_defined_folds");
  rows.push_back(std::move(mean));
  return rows;
}

inline std::string metrics_csv(const std::vector<MetricsRow> &rows) {
  std::string out = "fold,eda_rmse,eda_mae,pearson_r,accuracy,precision,recall,f1,notes\n";
  for (const auto &r : rows)
    out += r.label + ',' + format_double(r.rmse) + ',' + format_double(r.mae) + ',' +
           detail::cell(r.pearson_r) + ',' + format_double(r.accuracy) + ',' +
           format_double(r.precision) + ',' + format_double(r.recall) + ',' +
           format_double(r.f1) + ',' + r.notes + '\n';
  return out;
}

/// Per-epoch training losses, ordered by fold then epoch.
inline std::string curves_csv(const std::vector<FoldReport> &reports) {
  std::string out = "epoch,fold,l_eda,l_emotion,l_physics,lambda_eff\n";
  for (const auto &f : reports)
    for (const auto &t : f.traces)
      out += std::to_string(t.epoch) + ',' + std::to_string(f.fold) + ',' +
             format_double(t.l_eda) + ',' + format_double(t.l_emotion) + ',' +
             format_double(t.l_physics) + ',' + format_double(t.lambda_eff) + '\n';
  return out;
}

/// Final learned physics parameters per fold.
inline std::string params_csv(const std::vector<FoldReport> &reports) {
  std::string out = "fold,alpha0,beta1,beta2,beta3,gamma\n";
  for (const auto &f : reports)
    out += std::to_string(f.fold) + ',' + format_double(f.physics.alpha0) + ',' +
           format_double(f.physics.beta[0]) + ',' + format_double(f.physics.beta[1]) + ',' +
           format_double(f.physics.beta[2]) + ',' + format_double(f.physics.gamma) + '\n';
  return out;
}

/// Row-normalized confusion averaged over folds: entry [true][pred].
inline std::array<std::array<double, 2>, 2>
mean_normalized_confusion(const std::vector<FoldReport> &reports) {
  require(!reports.empty(), "mean_normalized_confusion: no fold reports");
  std::array<std::array<double, 2>, 2> acc{};
  for (const auto &f : reports) {
    const auto m = row_normalized(f.classification.confusion);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        acc[i][j] += m[i][j];
  }
  for (auto &row : acc)
    for (double &v : row)
      v /= static_cast<double>(reports.size());
  return acc;
}

inline std::string confusion_csv(const std::array<std::array<double, 2>, 2> &m) {
  std::string out = "true_label,pred_0,pred_1\n";
  for (int i = 0; i < 2; ++i)
    out += std::to_string(i) + ',' + format_double(m[i][0]) + ',' + format_double(m[i][1]) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string variant;
  std::optional<double> eda_rmse;
  double emotion_f1 = 0.0;
  std::optional<double> pearson_r;
  std::optional<double> physics_loss;
  std::string notes;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  /// Fold reports of every network variant, in the order requested.
  std::vector<std::vector<FoldReport>> variant_reports;
};

inline bool is_baseline_id(std::string_view id) { return id == "ridge" || id == "logistic"; }

inline void validate_variants(const std::vector<std::string> &variants) {
  if (variants.empty())
    throw ConfigError("train.variants: at least one variant is required");
  for (const auto &v : variants)
    if (!parse_variant(v) && !is_baseline_id(v))
      throw ConfigError("train.variants: unknown variant '" + v +
                        "' (expected full, no_physics, eda_only, emotion_only, ridge, logistic)");
}

/// Mean-over-folds row for one network variant.
inline AblationRow variant_row(TrainVariant v, const std::vector<FoldReport> &reports) {
  const auto agg = aggregate_folds(reports);
  const MetricsRow &mean = agg.back();
  AblationRow row{to_string(v), mean.rmse, mean.f1, mean.pearson_r, 0.0, mean.notes};
  double phys = 0.0;
  for (const auto &f : reports)
    phys += f.valid_physics_loss;
  row.physics_loss = phys / static_cast<double>(reports.size());
  if (v == TrainVariant::eda_only) {
    row.emotion_f1 = 0.0;
    row.notes = "no_trained_classifier";
  }
  if (v == TrainVariant::emotion_only)
    detail::append_note(row.notes, "no_trained_regressor");
  return row;
}

/// Runs every requested variant over the same stratified folds; baseline ids
/// fit ridge (EDA) or logistic (emotion) regression on those folds.
inline AblationResult ablation_table(const Dataset &data, const std::vector<std::string> &variants,
                                     const ModelConfig &model_cfg, const TrainRunConfig &cfg,
                                     std::size_t k = 5, std::size_t threads = 1,
                                     const BaselineConfig &baseline_cfg = {}) {
  validate_variants(variants);
  validate(cfg);
  validate(model_cfg);
  AblationResult result;
  std::optional<std::vector<BaselineFold>> baselines;
  for (const auto &id : variants) {
    if (auto v = parse_variant(id)) {
      TrainRunConfig vc = cfg;
      vc.variant = *v;
      result.variant_reports.push_back(run_kfold(data, k, vc, model_cfg, threads));
      result.rows.push_back(variant_row(*v, result.variant_reports.back()));
      continue;
    }
    if (!baselines)
      baselines = run_baselines(data, stratified_kfold(data, k, cfg.seed), baseline_cfg,
                                model_cfg.threshold);
    const double n = static_cast<double>(baselines->size());
    AblationRow row;
    row.variant = id;
    if (id == "ridge") {
      double rmse = 0.0, r = 0.0;
      std::size_t r_count = 0;
      for (const auto &b : *baselines) {
        rmse += b.ridge.rmse;
        if (b.ridge.pearson_r) {
          r += *b.ridge.pearson_r;
          ++r_count;
        }
      }
      row.eda_rmse = rmse / n;
      if (r_count > 0)
        row.pearson_r = r / static_cast<double>(r_count);
      row.emotion_f1 = 0.0;
      row.notes = "no_trained_classifier";
    } else {
      double f1 = 0.0;
      for (const auto &b : *baselines)
        f1 += b.logistic.f1;
      row.emotion_f1 = f1 / n;
      row.notes = "no_trained_regressor";
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

inline std::string ablation_csv(const std::vector<AblationRow> &rows) {
  std::string out = "variant,eda_rmse,emotion_f1,pearson_r,physics_loss,notes\n";
  for (const auto &r : rows)
    out += r.variant + ',' + detail::cell(r.eda_rmse) + ',' + format_double(r.emotion_f1) + ',' +
           detail::cell(r.pearson_r) + ',' + detail::cell(r.physics_loss) + ',' + r.notes + '\n';
  return out;
}

/// Multi-task comparison: network variants only.
inline std::string comparison_csv(const std::vector<AblationRow> &rows) {
  std::string out = "variant,eda_rmse,emotion_f1,pearson_r\n";
  for (const auto &r : rows)
    if (parse_variant(r.variant))
      out += r.variant + ',' + detail::cell(r.eda_rmse) + ',' + format_double(r.emotion_f1) + ',' +
             detail::cell(r.pearson_r) + '\n';
  return out;
}

} // namespace mtpinn
