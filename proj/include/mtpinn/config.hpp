#pragma once

// Run configuration file: a JSON object with optional sections
//   { "seed", "threads", "model": {...}, "train": {...},
//     "data": {"input": path} | {"synth": {...}}, "output": dir }
// Every field has a default, so "{}" is valid. Unknown keys are rejected with
// their full key path before anything runs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtpinn/baselines.hpp"
#include "mtpinn/data.hpp"
#include "mtpinn/errors.hpp"
#include "mtpinn/io.hpp"
#include "mtpinn/model.hpp"
#include "mtpinn/report.hpp"
#include "mtpinn/trainer.hpp"

namespace mtpinn {

struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  ModelConfig model;
  TrainRunConfig train;
  std::size_t folds = 5;
  std::vector<std::string> variants{"full", "no_physics", "eda_only", "emotion_only", "ridge",
                                    "logistic"};
  BaselineConfig baselines;
  /// CSV to load; when empty the synthetic benchmark is generated from `synth`.
  std::optional<std::filesystem::path> input;
  SynthSpec synth;
  std::filesystem::path output = "out";

  /// One seed drives every stream: init, dropout, shuffling, synthesis, folds.
  void set_seed(std::uint64_t s) {
    seed = s;
    model.seed = s;
    train.seed = s;
    synth.seed = s;
  }
};

namespace detail {

using json = nlohmann::json;

class Section {
public:
  Section(const json &obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object())
      fail(path_.empty() ? "configuration" : path_, "expected an object");
  }

  /// Throws on any key not in `allowed`.
  void only(std::initializer_list<std::string_view> allowed) const {
    const std::set<std::string_view> ok(allowed);
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!ok.contains(it.key()))
        fail(key(it.key()), "unknown key");
  }

  const json *get(std::string_view name) const {
    auto it = obj_.find(name);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string key(std::string_view name) const {
    return path_.empty() ? std::string(name) : path_ + "." + std::string(name);
  }

  void real(std::string_view name, double &out) const {
    if (const json *j = get(name)) {
      if (!j->is_number())
        fail(key(name), "expected a number");
      out = j->get<double>();
    }
  }

  template <typename U> void count(std::string_view name, U &out) const {
    if (const json *j = get(name)) {
      if (!j->is_number_unsigned())
        fail(key(name), "expected a non-negative integer");
      out = static_cast<U>(j->get<std::uint64_t>());
    }
  }

  void flag(std::string_view name, bool &out) const {
    if (const json *j = get(name)) {
      if (!j->is_boolean())
        fail(key(name), "expected true or false");
      out = j->get<bool>();
    }
  }

  void text(std::string_view name, std::string &out) const {
    if (const json *j = get(name)) {
      if (!j->is_string())
        fail(key(name), "expected a string");
      out = j->get<std::string>();
    }
  }

  void triple(std::string_view name, std::array<double, 3> &out) const {
    if (const json *j = get(name)) {
      if (!j->is_array() || j->size() != 3)
        fail(key(name), "expected an array of 3 numbers");
      for (std::size_t i = 0; i < 3; ++i) {
        if (!(*j)[i].is_number())
          fail(key(name) + "[" + std::to_string(i) + "]", "expected a number");
        out[i] = (*j)[i].get<double>();
      }
    }
  }

  std::optional<Section> child(std::string_view name) const {
    if (const json *j = get(name))
      return Section(*j, key(name));
    return std::nullopt;
  }

  [[noreturn]] static void fail(const std::string &where, const std::string &what) {
    throw ConfigError(where + ": " + what);
  }

private:
  const json &obj_;
  std::string path_;
};

inline void read_model(const Section &s, ModelConfig &m) {
  s.only({"hidden", "dropout", "bn_epsilon", "bn_momentum", "threshold", "lambda_floor",
          "lambda_frozen", "physics_raw_features"});
  if (const json *h = s.get("hidden")) {
    if (!h->is_array())
      Section::fail(s.key("hidden"), "expected an array of layer widths");
    m.hidden.clear();
    for (const auto &w : *h) {
      if (!w.is_number_unsigned())
        Section::fail(s.key("hidden"), "widths must be positive integers");
      m.hidden.push_back(w.get<std::size_t>());
    }
  }
  s.real("dropout", m.dropout);
  s.real("bn_epsilon", m.bn_epsilon);
  s.real("bn_momentum", m.bn_momentum);
  s.real("threshold", m.threshold);
  s.real("lambda_floor", m.lambda_floor);
  s.flag("lambda_frozen", m.lambda_frozen);
  s.flag("physics_raw_features", m.physics_raw_features);
}

inline void read_train(const Section &s, RunConfig &c) {
  s.only({"epochs", "batch_size", "variant", "lr", "beta1", "beta2", "epsilon",
          "emotion_only_no_physics", "folds", "variants", "ridge_lambda", "logistic_steps",
          "logistic_lr"});
  auto &t = c.train;
  s.count("epochs", t.epochs);
  s.count("batch_size", t.batch_size);
  std::string variant = to_string(t.variant);
  s.text("variant", variant);
  if (auto v = parse_variant(variant))
    t.variant = *v;
  else
    Section::fail(s.key("variant"), "unknown variant '" + variant + "'");
  s.real("lr", t.adam.lr);
  s.real("beta1", t.adam.beta1);
  s.real("beta2", t.adam.beta2);
  s.real("epsilon", t.adam.epsilon);
  s.flag("emotion_only_no_physics", t.emotion_only_no_physics);
  s.count("folds", c.folds);
  if (const json *v = s.get("variants")) {
    if (!v->is_array())
      Section::fail(s.key("variants"), "expected an array of variant ids");
    c.variants.clear();
    for (const auto &id : *v) {
      if (!id.is_string())
        Section::fail(s.key("variants"), "variant ids must be strings");
      c.variants.push_back(id.get<std::string>());
    }
  }
  s.real("ridge_lambda", c.baselines.ridge_lambda);
  s.count("logistic_steps", c.baselines.logistic_steps);
  s.real("logistic_lr", c.baselines.logistic_lr);
}

inline void read_synth(const Section &s, SynthSpec &p) {
  s.only({"alpha0", "beta", "gamma", "n", "noise_sd", "nonstress_mean", "stress_mean",
          "cluster_sd", "separation", "stress_fraction", "y0", "t_min", "t_max"});
  s.real("alpha0", p.physics.alpha0);
  s.triple("beta", p.physics.beta);
  s.real("gamma", p.physics.gamma);
  s.count("n", p.n);
  s.real("noise_sd", p.noise_sd);
  s.triple("nonstress_mean", p.nonstress_mean);
  s.triple("stress_mean", p.stress_mean);
  s.triple("cluster_sd", p.cluster_sd);
  s.real("separation", p.separation);
  s.real("stress_fraction", p.stress_fraction);
  s.real("y0", p.y0);
  s.real("t_min", p.t_min);
  s.real("t_max", p.t_max);
}

} // namespace detail

inline void validate(const RunConfig &c) {
  validate(c.model);
  validate(c.train);
  validate(c.synth);
  if (c.folds < 2)
    throw ConfigError("train.folds: must be >= 2");
  if (c.threads < 1)
    throw ConfigError("threads: must be >= 1");
  validate_variants(c.variants);
  if (!(c.baselines.ridge_lambda >= 0.0))
    throw ConfigError("train.ridge_lambda: must be >= 0");
  if (!(c.baselines.logistic_lr > 0.0))
    throw ConfigError("train.logistic_lr: must be > 0");
}

/// Parses and validates a configuration document. Relative `data.input` and
/// `output` paths are resolved against `base_dir`.
inline RunConfig parse_run_config(const std::string &text,
                                  const std::filesystem::path &base_dir = {}) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  RunConfig c;
  const detail::Section root(doc, "");
  root.only({"seed", "threads", "model", "train", "data", "output"});
  std::uint64_t seed = c.seed;
  root.count("seed", seed);
  c.set_seed(seed);
  root.count("threads", c.threads);
  if (auto s = root.child("model"))
    detail::read_model(*s, c.model);
  if (auto s = root.child("train"))
    detail::read_train(*s, c);
  if (auto s = root.child("data")) {
    s->only({"input", "synth"});
    if (s->get("input") && s->get("synth"))
      detail::Section::fail("data", "give either input or synth, not both");
    std::string input;
    s->text("input", input);
    if (s->get("input")) {
      if (input.empty())
        detail::Section::fail("data.input", "empty path");
      c.input = base_dir / input;
    }
    if (auto synth = s->child("synth"))
      detail::read_synth(*synth, c.synth);
  }
  std::string output;
  root.text("output", output);
  if (root.get("output"))
    c.output = base_dir / output;
  c.set_seed(c.seed);
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path &path) {
  auto text = read_file(path);
  if (!text)
    throw ConfigError("cannot read configuration file " + path.string());
  return parse_run_config(*text, path.parent_path());
}

/// The dataset named by the configuration, or the synthetic benchmark.
inline Dataset load_dataset(const RunConfig &c) {
  if (c.input)
    return load_csv(*c.input);
  return synth_generate(c.synth).data;
}

} // namespace mtpinn
