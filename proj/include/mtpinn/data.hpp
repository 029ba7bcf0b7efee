#pragma once

// Tabular schema, CSV ingestion, normalization, stratified splits, and the
// synthetic benchmark generated from the first-order EDA model.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mtpinn/errors.hpp"
#include "mtpinn/io.hpp"
#include "mtpinn/matrix.hpp"
#include "mtpinn/physics.hpp"
#include "mtpinn/rng.hpp"

namespace mtpinn {

/// One window: time proxy, (PANAS_mean, SAM_valence, SAM_arousal), window-mean
/// EDA, and the binary state (0 non-stress, 1 stress).
struct Sample {
  double t = 0.0;
  std::array<double, 3> e{};
  double y = 0.0;
  int label = 0;

  friend bool operator==(const Sample &, const Sample &) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  /// 1-based line number in the source file per sample (header is line 1);
  /// empty for generated data.
  std::vector<std::size_t> source_rows;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.samples.reserve(idx.size());
    for (auto i : idx) {
      out.samples.push_back(samples.at(i));
      if (!source_rows.empty())
        out.source_rows.push_back(source_rows.at(i));
    }
    return out;
  }
};

inline constexpr std::string_view kCsvHeader = "t,panas_mean,sam_valence,sam_arousal,eda_mean,label";
inline constexpr std::array<std::string_view, 6> kCsvColumns{
    "t", "panas_mean", "sam_valence", "sam_arousal", "eda_mean", "label"};

inline Dataset parse_csv(std::string_view text) {
  Dataset data;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  if (text.starts_with("\xEF\xBB\xBF"))
    pos = 3;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    if (line.empty()) {
      if (pos > text.size())
        break;
      continue;
    }
    auto fields = split_fields(line);
    if (!header_seen) {
      header_seen = true;
      for (std::size_t i = 0; i < kCsvColumns.size(); ++i) {
        if (i >= fields.size())
          throw ParseError(line_no, "missing column '" + std::string(kCsvColumns[i]) + "'");
        if (fields[i] != kCsvColumns[i])
          throw ParseError(line_no, "expected column '" + std::string(kCsvColumns[i]) +
                                        "' but found '" + std::string(fields[i]) + "'");
      }
      if (fields.size() > kCsvColumns.size())
        throw ParseError(line_no, "unexpected extra column '" +
                                      std::string(fields[kCsvColumns.size()]) + "'");
      continue;
    }
    if (fields.size() != kCsvColumns.size())
      throw ParseError(line_no, "expected " + std::to_string(kCsvColumns.size()) +
                                    " fields, found " + std::to_string(fields.size()));
    std::array<double, 6> v{};
    for (std::size_t i = 0; i < fields.size(); ++i) {
      auto parsed = parse_double(fields[i]);
      if (!parsed)
        throw ParseError(line_no, "column '" + std::string(kCsvColumns[i]) +
                                      "': not a finite number: '" + std::string(fields[i]) + "'");
      v[i] = *parsed;
    }
    if (v[5] != 0.0 && v[5] != 1.0)
      throw ParseError(line_no, "column 'label': must be 0 or 1, found '" +
                                    std::string(fields[5]) + "'");
    data.samples.push_back({v[0], {v[1], v[2], v[3]}, v[4], static_cast<int>(v[5])});
    data.source_rows.push_back(line_no);
  }
  if (!header_seen)
    throw ParseError(0, "empty file: header row is mandatory");
  return data;
}

inline Dataset load_csv(const std::filesystem::path &path) {
  auto text = read_file(path);
  if (!text)
    throw ParseError(0, "cannot read " + path.string());
  return parse_csv(*text);
}

inline std::string to_csv(const Dataset &data) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto &s : data.samples) {
    out += format_double(s.t) + ',' + format_double(s.e[0]) + ',' + format_double(s.e[1]) +
           ',' + format_double(s.e[2]) + ',' + format_double(s.y) + ',' +
           std::to_string(s.label) + '\n';
  }
  return out;
}

inline void write_csv(const Dataset &data, const std::filesystem::path &path) {
  write_file_atomic(path, to_csv(data));
}

/// Sibling file holding ground-truth dy/dt: `<name>.ddt.csv`, header `row,dydt`,
/// rows numbered from 1 in dataset order.
inline std::filesystem::path ddt_path_for(const std::filesystem::path &csv) {
  auto p = csv;
  p.replace_extension(".ddt.csv");
  return p;
}

inline void write_ddt_csv(std::span<const double> dydt, const std::filesystem::path &path) {
  std::string out = "row,dydt\n";
  for (std::size_t i = 0; i < dydt.size(); ++i)
    out += std::to_string(i + 1) + ',' + format_double(dydt[i]) + '\n';
  write_file_atomic(path, out);
}

inline std::vector<double> load_ddt_csv(const std::filesystem::path &path) {
  auto text = read_file(path);
  if (!text)
    throw ParseError(0, "cannot read " + path.string());
  std::vector<double> out;
  std::size_t line_no = 0, pos = 0;
  std::string_view sv(*text);
  while (pos < sv.size()) {
    std::size_t end = sv.find('\n', pos);
    if (end == std::string_view::npos)
      end = sv.size();
    auto line = sv.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    if (line.empty())
      continue;
    if (line_no == 1) {
      if (line != "row,dydt")
        throw ParseError(1, "expected header 'row,dydt'");
      continue;
    }
    auto f = split_fields(line);
    if (f.size() != 2)
      throw ParseError(line_no, "expected 2 fields");
    auto v = parse_double(f[1]);
    if (!v)
      throw ParseError(line_no, "column 'dydt': not a finite number");
    out.push_back(*v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

/// z-scores the four inputs (t, e1, e2, e3) with population standard
/// deviations, and maps the EDA target affinely so the fitting split spans
/// [0, 1]. Values outside the fitting split are not clamped.
struct Normalizer {
  std::array<double, 4> mean{0, 0, 0, 0};
  std::array<double, 4> sd{1, 1, 1, 1};
  double target_min = 0.0;
  double target_max = 1.0;

  double normalize_target(double y) const { return (y - target_min) / (target_max - target_min); }
  double invert_target(double yn) const { return yn * (target_max - target_min) + target_min; }

  Sample apply(const Sample &s) const {
    Sample o = s;
    o.t = (s.t - mean[0]) / sd[0];
    for (std::size_t k = 0; k < 3; ++k)
      o.e[k] = (s.e[k] - mean[k + 1]) / sd[k + 1];
    o.y = normalize_target(s.y);
    return o;
  }

  Dataset apply(const Dataset &d) const {
    Dataset out = d;
    for (auto &s : out.samples)
      s = apply(s);
    return out;
  }

  friend bool operator==(const Normalizer &, const Normalizer &) = default;
};

inline Normalizer fit_normalizer(const Dataset &train) {
  if (train.empty())
    throw ConfigError("fit_normalizer: empty training split");
  static constexpr std::array<const char *, 4> names{"t", "panas_mean", "sam_valence",
                                                     "sam_arousal"};
  const double n = static_cast<double>(train.size());
  auto column = [&](const Sample &s, std::size_t c) { return c == 0 ? s.t : s.e[c - 1]; };
  Normalizer norm;
  for (std::size_t c = 0; c < 4; ++c) {
    double sum = 0.0;
    for (const auto &s : train.samples)
      sum += column(s, c);
    const double mu = sum / n;
    double ss = 0.0;
    for (const auto &s : train.samples) {
      const double d = column(s, c) - mu;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0))
      throw ConfigError(std::string("fit_normalizer: column '") + names[c] +
                        "' is constant on the training split");
    norm.mean[c] = mu;
    norm.sd[c] = sd;
  }
  auto [lo, hi] = std::minmax_element(train.samples.begin(), train.samples.end(),
                                      [](const Sample &a, const Sample &b) { return a.y < b.y; });
  if (!(hi->y > lo->y))
    throw ConfigError("fit_normalizer: column 'eda_mean' is constant on the training split");
  norm.target_min = lo->y;
  norm.target_max = hi->y;
  return norm;
}

// ---------------------------------------------------------------------------
// Mini-batches

/// Network-ready slice of a normalized dataset.
struct SampleBatch {
  Matrix inputs;                 // n x 4: t, panas, valence, arousal
  std::vector<double> target;    // normalized EDA
  std::vector<int> label;
  Matrix physics_features;       // n x 3: the e used in the residual

  std::size_t size() const noexcept { return target.size(); }
};

/// `raw_for_physics`, when given, supplies un-normalized emotion features for
/// the residual instead of the network inputs.
inline SampleBatch make_batch(const Dataset &normalized, std::span<const std::size_t> idx,
                              const Dataset *raw_for_physics = nullptr) {
  SampleBatch b;
  b.inputs = Matrix(idx.size(), 4);
  b.physics_features = Matrix(idx.size(), 3);
  b.target.reserve(idx.size());
  b.label.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Sample &s = normalized.samples.at(idx[r]);
    b.inputs(r, 0) = s.t;
    for (std::size_t k = 0; k < 3; ++k) {
      b.inputs(r, k + 1) = s.e[k];
      b.physics_features(r, k) = raw_for_physics ? raw_for_physics->samples.at(idx[r]).e[k] : s.e[k];
    }
    b.target.push_back(s.y);
    b.label.push_back(s.label);
  }
  return b;
}

inline SampleBatch make_batch(const Dataset &normalized) {
  std::vector<std::size_t> idx(normalized.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = i;
  return make_batch(normalized, idx);
}

// ---------------------------------------------------------------------------
// Stratified k-fold

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
};

/// Each class is shuffled and dealt round-robin over the folds; the dealing
/// position carries over from one class to the next so fold sizes stay within
/// one sample of each other. Per-fold class counts are floor or ceil of
/// (class size / k).
inline std::vector<FoldSplit> stratified_kfold(const Dataset &data, std::size_t k,
                                               std::uint64_t seed) {
  if (k < 2)
    throw ConfigError("stratified_kfold: k must be >= 2");
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[data.samples[i].label == 1 ? 1 : 0].push_back(i);
  for (int c = 0; c < 2; ++c)
    if (by_class[c].size() < k)
      throw ConfigError("stratified_kfold: class " + std::to_string(c) + " has " +
                        std::to_string(by_class[c].size()) + " samples, fewer than k = " +
                        std::to_string(k));

  Pcg32 rng = make_stream(seed, Stream::folds);
  std::vector<std::vector<std::size_t>> valid(k);
  std::size_t cursor = 0;
  for (auto &members : by_class) {
    rng.shuffle(members);
    for (auto i : members) {
      valid[cursor].push_back(i);
      cursor = (cursor + 1) % k;
    }
  }
  std::vector<FoldSplit> folds(k);
  std::vector<std::size_t> owner(data.size());
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(valid[f].begin(), valid[f].end());
    for (auto i : valid[f])
      owner[i] = f;
    folds[f].valid = std::move(valid[f]);
  }
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t f = 0; f < k; ++f)
      if (owner[i] != f)
        folds[f].train.push_back(i);
  return folds;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

/// Closed-form solution of gamma*y' + alpha0*y = beta^T e for constant e.
inline double analytic_eda(const PhysicsParams &p, const std::array<double, 3> &e, double y0,
                           double t) {
  const double steady = drive(p, e) / p.alpha0;
  const double decay = std::exp(-p.alpha0 * t / p.gamma);
  return steady * (1.0 - decay) + y0 * decay;
}

inline double analytic_eda_rate(const PhysicsParams &p, const std::array<double, 3> &e,
                                double y0, double t) {
  return (drive(p, e) - p.alpha0 * analytic_eda(p, e, y0, t)) / p.gamma;
}

struct SynthSpec {
  PhysicsParams physics{2.0, {0.8, -0.5, 0.9}, 1.0, 0.0};
  std::size_t n = 2000;
  double noise_sd = 0.01;
  /// Centers of the (PANAS_mean, SAM_valence, SAM_arousal) clusters.
  std::array<double, 3> nonstress_mean{2.49, 5.67, 3.39};
  std::array<double, 3> stress_mean{2.91, 4.13, 5.21};
  /// Per-feature standard deviation, shared by both clusters.
  std::array<double, 3> cluster_sd{0.54, 0.72, 0.72};
  /// Multiplies the distance between the two cluster centers about their midpoint.
  double separation = 1.0;
  double stress_fraction = 0.4;
  double y0 = 5.0;
  double t_min = 0.0;
  double t_max = 1.0;
  std::uint64_t seed = 42;
};

struct SynthData {
  Dataset data;
  std::vector<double> dydt; // noise-free analytic derivative per sample
};

inline void validate(const SynthSpec &s) {
  if (!(s.physics.alpha0 > 0.0))
    throw ConfigError("synth: alpha0 must be > 0");
  if (!(s.physics.gamma > 0.0))
    throw ConfigError("synth: gamma must be > 0");
  if (s.n == 0)
    throw ConfigError("synth: n must be >= 1");
  if (!(s.noise_sd >= 0.0))
    throw ConfigError("synth: noise_sd must be >= 0");
  if (!(s.stress_fraction > 0.0 && s.stress_fraction < 1.0))
    throw ConfigError("synth: stress_fraction must lie in (0, 1)");
  if (!(s.separation >= 0.0))
    throw ConfigError("synth: separation must be >= 0");
  if (!(s.t_max > s.t_min))
    throw ConfigError("synth: t_max must exceed t_min");
  for (double sd : s.cluster_sd)
    if (!(sd >= 0.0))
      throw ConfigError("synth: cluster_sd entries must be >= 0");
}

/// Each sample draws its class, then e from that class's Gaussian cluster, t
/// uniform on [t_min, t_max], and y from the closed form plus N(0, noise_sd^2).
/// The returned dy/dt is the noise-free analytic derivative.
inline SynthData synth_generate(const SynthSpec &spec) {
  validate(spec);
  Pcg32 rng = make_stream(spec.seed, Stream::synth);
  std::array<double, 3> mid{}, half{};
  for (std::size_t k = 0; k < 3; ++k) {
    mid[k] = 0.5 * (spec.nonstress_mean[k] + spec.stress_mean[k]);
    half[k] = 0.5 * spec.separation * (spec.stress_mean[k] - spec.nonstress_mean[k]);
  }
  SynthData out;
  out.data.samples.reserve(spec.n);
  out.dydt.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Sample s;
    s.label = rng.uniform() < spec.stress_fraction ? 1 : 0;
    const double sign = s.label == 1 ? 1.0 : -1.0;
    for (std::size_t k = 0; k < 3; ++k)
      s.e[k] = mid[k] + sign * half[k] + spec.cluster_sd[k] * rng.normal();
    s.t = rng.uniform(spec.t_min, spec.t_max);
    const double t_rel = s.t - spec.t_min;
    s.y = analytic_eda(spec.physics, s.e, spec.y0, t_rel);
    const double noise = rng.normal();
    if (spec.noise_sd > 0.0)
      s.y += spec.noise_sd * noise;
    out.dydt.push_back(analytic_eda_rate(spec.physics, s.e, spec.y0, t_rel));
    out.data.samples.push_back(s);
  }
  return out;
}

/// Classic fourth-order Runge-Kutta on dy/dt = (beta^T e - alpha0 y) / gamma
/// over `grid`, starting from y0 at grid[0]. Returns y at every grid point.
inline std::vector<double> rk4_integrate(const PhysicsParams &p, const std::array<double, 3> &e,
                                         double y0, std::span<const double> grid) {
  require(!grid.empty(), "rk4_integrate: empty grid");
  require(p.gamma != 0.0, "rk4_integrate: gamma must be nonzero");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    require(grid[i] > grid[i - 1], "rk4_integrate: grid must be strictly increasing");
    require(grid[i] - grid[i - 1] <= 1e-2 * (1.0 + 1e-9), "rk4_integrate: grid step exceeds 1e-2");
  }
  const double b = drive(p, e);
  auto rate = [&](double y) { return (b - p.alpha0 * y) / p.gamma; };
  std::vector<double> y(grid.size());
  y[0] = y0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double h = grid[i] - grid[i - 1];
    const double k1 = rate(y[i - 1]);
    const double k2 = rate(y[i - 1] + 0.5 * h * k1);
    const double k3 = rate(y[i - 1] + 0.5 * h * k2);
    const double k4 = rate(y[i - 1] + h * k3);
    y[i] = y[i - 1] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

/// 0, h, 2h, ..., up to `end` (inclusive when end is a multiple of h).
inline std::vector<double> uniform_grid(double end, double step) {
  const auto n = static_cast<std::size_t>(std::llround(end / step));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i)
    g[i] = static_cast<double>(i) * step;
  return g;
}

} // namespace mtpinn
