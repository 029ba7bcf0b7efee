#pragma once

// Versioned text checkpoints. Every real is stored as its shortest
// round-trip decimal string, and object keys are emitted in sorted order, so
// identical models produce identical bytes.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "mtpinn/errors.hpp"
#include "mtpinn/io.hpp"
#include "mtpinn/model.hpp"

namespace mtpinn {

inline constexpr std::string_view kCheckpointVersion = "1";

namespace detail {

using nlohmann::json;

inline json reals(std::span<const double> v) {
  json a = json::array();
  for (double x : v)
    a.push_back(format_double(x));
  return a;
}

inline json matrix_json(const Matrix &m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", reals(m.values())}};
}

[[noreturn]] inline void schema_error(const std::string &what) {
  throw CheckpointError(CheckpointError::Kind::schema_mismatch, "checkpoint schema: " + what);
}

inline const json &field(const json &obj, const char *key, const std::string &path) {
  if (!obj.is_object() || !obj.contains(key))
    schema_error("missing field " + path + "." + key);
  return obj.at(key);
}

inline double real_of(const json &j, const std::string &path) {
  if (!j.is_string())
    schema_error(path + " must be a decimal string");
  auto v = parse_double(j.get<std::string>());
  if (!v)
    schema_error(path + " is not a finite real");
  return *v;
}

inline std::vector<double> reals_of(const json &j, const std::string &path) {
  if (!j.is_array())
    schema_error(path + " must be an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(real_of(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::size_t count_of(const json &j, const std::string &path) {
  if (!j.is_number_unsigned())
    schema_error(path + " must be a non-negative integer");
  return j.get<std::size_t>();
}

inline Matrix matrix_of(const json &j, const std::string &path) {
  const auto rows = count_of(field(j, "rows", path), path + ".rows");
  const auto cols = count_of(field(j, "cols", path), path + ".cols");
  auto data = reals_of(field(j, "data", path), path + ".data");
  if (data.size() != rows * cols)
    schema_error(path + ": data length does not match rows*cols");
  return Matrix(rows, cols, std::move(data));
}

inline void expect_shape(const Matrix &m, std::size_t rows, std::size_t cols,
                         const std::string &path) {
  if (m.rows() != rows || m.cols() != cols)
    schema_error(path + " has shape " + shape_str(m) + ", expected " + std::to_string(rows) +
                 "x" + std::to_string(cols));
}

} // namespace detail

inline std::string checkpoint_to_string(const ModelParams &m) {
  using detail::json;
  using detail::matrix_json;
  using detail::reals;
  const auto &c = m.config;
  json cfg = {{"hidden", c.hidden},
              {"dropout", format_double(c.dropout)},
              {"bn_epsilon", format_double(c.bn_epsilon)},
              {"bn_momentum", format_double(c.bn_momentum)},
              {"seed", std::to_string(c.seed)},
              {"threshold", format_double(c.threshold)},
              {"lambda_floor", format_double(c.lambda_floor)},
              {"lambda_frozen", c.lambda_frozen},
              {"physics_raw_features", c.physics_raw_features}};
  const auto &n = m.normalizer;
  json norm = {{"mean", reals(n.mean)},
               {"sd", reals(n.sd)},
               {"target_min", format_double(n.target_min)},
               {"target_max", format_double(n.target_max)}};
  json phys = {{"alpha0", format_double(m.physics.alpha0)},
               {"beta", reals(m.physics.beta)},
               {"gamma", format_double(m.physics.gamma)},
               {"rho", format_double(m.physics.rho)}};
  json hidden = json::array();
  for (std::size_t l = 0; l < m.hidden.size(); ++l) {
    hidden.push_back({{"weight", matrix_json(m.hidden[l].weight)},
                      {"scale", matrix_json(m.norms[l].scale)},
                      {"shift", matrix_json(m.norms[l].shift)},
                      {"running_mean", matrix_json(m.norms[l].running_mean)},
                      {"running_var", matrix_json(m.norms[l].running_var)}});
  }
  json layers = {{"hidden", hidden},
                 {"eda_head", {{"weight", matrix_json(m.eda_head.weight)},
                               {"bias", matrix_json(m.eda_head.bias)}}},
                 {"emotion_head", {{"weight", matrix_json(m.emotion_head.weight)},
                                   {"bias", matrix_json(m.emotion_head.bias)}}}};
  json doc = {{"format_version", std::string(kCheckpointVersion)},
              {"config", cfg},
              {"normalizer", norm},
              {"physics", phys},
              {"layers", layers}};
  return doc.dump(1) + "\n";
}

inline ModelParams checkpoint_from_string(const std::string &text) {
  using namespace detail;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw CheckpointError(CheckpointError::Kind::unreadable,
                          std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version"))
    schema_error("missing field format_version");
  const auto &ver = doc.at("format_version");
  if (!ver.is_string() || ver.get<std::string>() != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "checkpoint format_version " + ver.dump() + ", expected \"" +
                              std::string(kCheckpointVersion) + "\"");

  ModelParams m;
  const auto &cfg = field(doc, "config", "");
  auto &c = m.config;
  const auto &hidden_widths = field(cfg, "hidden", "config");
  if (!hidden_widths.is_array())
    schema_error("config.hidden must be an array");
  c.hidden.clear();
  for (const auto &w : hidden_widths)
    c.hidden.push_back(count_of(w, "config.hidden[]"));
  c.dropout = real_of(field(cfg, "dropout", "config"), "config.dropout");
  c.bn_epsilon = real_of(field(cfg, "bn_epsilon", "config"), "config.bn_epsilon");
  c.bn_momentum = real_of(field(cfg, "bn_momentum", "config"), "config.bn_momentum");
  const auto &seed = field(cfg, "seed", "config");
  if (!seed.is_string())
    schema_error("config.seed must be a decimal string");
  try {
    c.seed = std::stoull(seed.get<std::string>());
  } catch (const std::exception &) {
    schema_error("config.seed is not an unsigned integer");
  }
  c.threshold = real_of(field(cfg, "threshold", "config"), "config.threshold");
  c.lambda_floor = real_of(field(cfg, "lambda_floor", "config"), "config.lambda_floor");
  const auto &frozen = field(cfg, "lambda_frozen", "config");
  const auto &raw = field(cfg, "physics_raw_features", "config");
  if (!frozen.is_boolean() || !raw.is_boolean())
    schema_error("config flags must be booleans");
  c.lambda_frozen = frozen.get<bool>();
  c.physics_raw_features = raw.get<bool>();
  try {
    validate(c);
  } catch (const ConfigError &e) {
    schema_error(e.what());
  }

  const auto &norm = field(doc, "normalizer", "");
  auto mean = reals_of(field(norm, "mean", "normalizer"), "normalizer.mean");
  auto sd = reals_of(field(norm, "sd", "normalizer"), "normalizer.sd");
  if (mean.size() != 4 || sd.size() != 4)
    schema_error("normalizer.mean/sd must have 4 entries");
  std::copy(mean.begin(), mean.end(), m.normalizer.mean.begin());
  std::copy(sd.begin(), sd.end(), m.normalizer.sd.begin());
  m.normalizer.target_min = real_of(field(norm, "target_min", "normalizer"), "normalizer.target_min");
  m.normalizer.target_max = real_of(field(norm, "target_max", "normalizer"), "normalizer.target_max");

  const auto &phys = field(doc, "physics", "");
  m.physics.alpha0 = real_of(field(phys, "alpha0", "physics"), "physics.alpha0");
  auto beta = reals_of(field(phys, "beta", "physics"), "physics.beta");
  if (beta.size() != 3)
    schema_error("physics.beta must have 3 entries");
  std::copy(beta.begin(), beta.end(), m.physics.beta.begin());
  m.physics.gamma = real_of(field(phys, "gamma", "physics"), "physics.gamma");
  m.physics.rho = real_of(field(phys, "rho", "physics"), "physics.rho");

  const auto &layers = field(doc, "layers", "");
  const auto &hidden = field(layers, "hidden", "layers");
  if (!hidden.is_array() || hidden.size() != c.hidden.size())
    schema_error("layers.hidden must have one entry per configured hidden width");
  std::size_t in = kInputWidth;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const std::string p = "layers.hidden[" + std::to_string(l) + "]";
    const std::size_t w = c.hidden[l];
    DenseLayer dense{matrix_of(field(hidden[l], "weight", p), p + ".weight"), Matrix()};
    expect_shape(dense.weight, in, w, p + ".weight");
    NormLayer nl{matrix_of(field(hidden[l], "scale", p), p + ".scale"),
                 matrix_of(field(hidden[l], "shift", p), p + ".shift"),
                 matrix_of(field(hidden[l], "running_mean", p), p + ".running_mean"),
                 matrix_of(field(hidden[l], "running_var", p), p + ".running_var")};
    expect_shape(nl.scale, 1, w, p + ".scale");
    expect_shape(nl.shift, 1, w, p + ".shift");
    expect_shape(nl.running_mean, 1, w, p + ".running_mean");
    expect_shape(nl.running_var, 1, w, p + ".running_var");
    m.hidden.push_back(std::move(dense));
    m.norms.push_back(std::move(nl));
    in = w;
  }
  auto head = [&](const char *name) {
    const std::string p = std::string("layers.") + name;
    const auto &h = field(layers, name, "layers");
    DenseLayer d{matrix_of(field(h, "weight", p), p + ".weight"),
                 matrix_of(field(h, "bias", p), p + ".bias")};
    expect_shape(d.weight, in, 1, p + ".weight");
    expect_shape(d.bias, 1, 1, p + ".bias");
    return d;
  };
  m.eda_head = head("eda_head");
  m.emotion_head = head("emotion_head");
  return m;
}

inline void save_checkpoint(const ModelParams &m, const std::filesystem::path &path) {
  write_file_atomic(path, checkpoint_to_string(m));
}

inline ModelParams load_checkpoint(const std::filesystem::path &path) {
  auto text = read_file(path);
  if (!text)
    throw CheckpointError(CheckpointError::Kind::unreadable, "cannot read " + path.string());
  return checkpoint_from_string(*text);
}

} // namespace mtpinn
