// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a flat `key = value` text format.
//
//   # comment
//   seed = 7
//   schedule.layers = 2,3,4
//
// Unknown keys, malformed values and out-of-range settings raise ConfigError
// naming the offending field. `describe_schema()` lists every key with its
// default.

#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "epic/backbone.hpp"
#include "epic/data.hpp"
#include "epic/interaction_hub.hpp"
#include "epic/model.hpp"
#include "epic/objective.hpp"

namespace epic {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  [[nodiscard]] const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 30;
  std::size_t batch = 16;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  BackboneConfig backbone;
  ModelConfig model;
  SyntheticTaskSpec task;
  OptimConfig optim;
  bool literal_losses = false;
  std::string output_dir = "runs";
  /// Parallel runs for ablate and sweep; 0 picks the hardware concurrency.
  std::size_t workers = 0;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join_layers(const std::vector<std::size_t>& layers, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(layers[i]);
  }
  return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> parse_layers(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  return out;
}

struct Field {
  std::string key;
  std::string doc;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field size_field(std::string key, std::string doc, T ExperimentConfig::*outer, std::size_t T::*member) {
  return {key, std::move(doc),
          [key, outer, member](ExperimentConfig& c, const std::string& v) { c.*outer.*member = parse_size(key, v); },
          [outer, member](const ExperimentConfig& c) { return std::to_string(c.*outer.*member); }};
}

template <typename T>
Field double_field(std::string key, std::string doc, T ExperimentConfig::*outer, double T::*member) {
  return {key, std::move(doc),
          [key, outer, member](ExperimentConfig& c, const std::string& v) { c.*outer.*member = parse_double(key, v); },
          [outer, member](const ExperimentConfig& c) { return format_double(c.*outer.*member); }};
}

inline const std::vector<Field>& schema() {
  using C = ExperimentConfig;
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back({"seed", "master seed; every random stream derives from it",
                 [](C& c, const std::string& v) { c.seed = parse_size("seed", v); },
                 [](const C& c) { return std::to_string(c.seed); }});
    f.push_back(size_field("backbone.layers", "encoder layers per branch", &C::backbone, &BackboneConfig::layers));
    f.push_back(size_field("backbone.d_vision", "vision width", &C::backbone, &BackboneConfig::d_vision));
    f.push_back(size_field("backbone.d_text", "text width", &C::backbone, &BackboneConfig::d_text));
    f.push_back(size_field("backbone.heads", "attention heads", &C::backbone, &BackboneConfig::heads));
    f.push_back(size_field("backbone.mlp_ratio", "MLP hidden width / model width", &C::backbone,
                           &BackboneConfig::mlp_ratio));
    f.push_back(size_field("backbone.vocab", "text vocabulary size", &C::backbone, &BackboneConfig::vocab));
    f.push_back(size_field("backbone.image_channels", "image channels", &C::backbone, &BackboneConfig::channels));
    f.push_back(size_field("backbone.image_height", "image height", &C::backbone, &BackboneConfig::image_height));
    f.push_back(size_field("backbone.image_width", "image width", &C::backbone, &BackboneConfig::image_width));
    f.push_back(size_field("backbone.patch", "square patch edge", &C::backbone, &BackboneConfig::patch));
    f.push_back(size_field("backbone.text_length", "tokens per text", &C::backbone, &BackboneConfig::text_length));
    f.push_back(size_field("prompt.length", "prompt rows per modality", &C::model, &ModelConfig::prompt_len));
    f.push_back(double_field("prompt.init_std", "Gaussian std of the text prompt", &C::model,
                             &ModelConfig::prompt_init_std));
    f.push_back({"schedule.layers", "0-based interaction layers, comma separated",
                 [](C& c, const std::string& v) { c.model.interaction_layers = parse_layers("schedule.layers", v); },
                 [](const C& c) { return join_layers(c.model.interaction_layers); }});
    f.push_back({"mode", "baseline | ptuning | linear | epic",
                 [](C& c, const std::string& v) {
                   auto m = parse_mode(v);
                   if (!m) throw ConfigError("mode", "unknown mode '" + v + "' (baseline, ptuning, linear, epic)");
                   c.model.mode = *m;
                 },
                 [](const C& c) { return std::string(mode_name(c.model.mode)); }});
    f.push_back({"similarity.family", "cos | mmd | cov_pearson",
                 [](C& c, const std::string& v) {
                   auto fam = parse_family(v);
                   if (!fam) throw ConfigError("similarity.family", "unknown family '" + v + "' (cos, mmd, cov_pearson)");
                   c.model.similarity.family = *fam;
                 },
                 [](const C& c) { return std::string(family_name(c.model.similarity.family)); }});
    f.push_back({"similarity.gate_axis", "feature | token",
                 [](C& c, const std::string& v) {
                   if (v == "feature") c.model.similarity.gate_axis = GateAxis::Feature;
                   else if (v == "token") c.model.similarity.gate_axis = GateAxis::Token;
                   else throw ConfigError("similarity.gate_axis", "expected feature or token, got '" + v + "'");
                 },
                 [](const C& c) {
                   return std::string(c.model.similarity.gate_axis == GateAxis::Feature ? "feature" : "token");
                 }});
    f.push_back({"similarity.mmd_bandwidth", "RBF bandwidth; 'median' for the median heuristic",
                 [](C& c, const std::string& v) {
                   if (v == "median") c.model.similarity.mmd_bandwidth.reset();
                   else c.model.similarity.mmd_bandwidth = parse_double("similarity.mmd_bandwidth", v);
                 },
                 [](const C& c) {
                   return c.model.similarity.mmd_bandwidth ? format_double(*c.model.similarity.mmd_bandwidth)
                                                           : std::string("median");
                 }});
    f.push_back({"similarity.gate_temperature", "gate logits are divided by this before the softmax",
                 [](C& c, const std::string& v) {
                   c.model.similarity.gate_temperature = parse_double("similarity.gate_temperature", v);
                 },
                 [](const C& c) { return format_double(c.model.similarity.gate_temperature); }});
    f.push_back({"task.kind", "uni | multi | entailment3",
                 [](C& c, const std::string& v) {
                   if (v == "uni") c.task.task = TaskKind::Uni;
                   else if (v == "multi") c.task.task = TaskKind::Multi;
                   else if (v == "entailment3") c.task.task = TaskKind::Entailment3;
                   else throw ConfigError("task.kind", "expected uni, multi or entailment3, got '" + v + "'");
                 },
                 [](const C& c) { return std::string(task_name(c.task.task)); }});
    f.push_back(size_field("task.classes", "class count (entailment3 always uses 3)", &C::task,
                           &SyntheticTaskSpec::classes));
    f.push_back(size_field("task.n_train", "training samples", &C::task, &SyntheticTaskSpec::n_train));
    f.push_back(size_field("task.n_val", "validation samples", &C::task, &SyntheticTaskSpec::n_val));
    f.push_back(size_field("task.n_test", "test samples", &C::task, &SyntheticTaskSpec::n_test));
    f.push_back(double_field("task.noise", "probability that one modality is a distractor", &C::task,
                             &SyntheticTaskSpec::noise));
    f.push_back(double_field("task.pixel_noise", "Gaussian pixel noise std", &C::task,
                             &SyntheticTaskSpec::pixel_noise));
    f.push_back(double_field("task.token_noise", "per-token resample probability", &C::task,
                             &SyntheticTaskSpec::token_noise));
    f.push_back(double_field("objective.temperature", "classifier temperature", &C::model,
                             &ModelConfig::temperature));
    f.push_back({"objective.train_temperature", "make the classifier temperature trainable",
                 [](C& c, const std::string& v) {
                   c.model.train_temperature = parse_bool("objective.train_temperature", v);
                 },
                 [](const C& c) { return std::string(c.model.train_temperature ? "true" : "false"); }});
    f.push_back({"objective.literal_losses", "use the literal loss forms",
                 [](C& c, const std::string& v) { c.literal_losses = parse_bool("objective.literal_losses", v); },
                 [](const C& c) { return std::string(c.literal_losses ? "true" : "false"); }});
    f.push_back(double_field("optim.lr", "Adam learning rate", &C::optim, &OptimConfig::lr));
    f.push_back(double_field("optim.beta1", "Adam beta1", &C::optim, &OptimConfig::beta1));
    f.push_back(double_field("optim.beta2", "Adam beta2", &C::optim, &OptimConfig::beta2));
    f.push_back(double_field("optim.eps", "Adam epsilon", &C::optim, &OptimConfig::eps));
    f.push_back(size_field("optim.epochs", "training epochs", &C::optim, &OptimConfig::epochs));
    f.push_back(size_field("optim.batch", "minibatch size", &C::optim, &OptimConfig::batch));
    f.push_back({"output.dir", "directory for run artifacts",
                 [](C& c, const std::string& v) { c.output_dir = v; },
                 [](const C& c) { return c.output_dir; }});
    f.push_back({"run.workers", "parallel runs for ablate/sweep; 0 = hardware concurrency",
                 [](C& c, const std::string& v) { c.workers = parse_size("run.workers", v); },
                 [](const C& c) { return std::to_string(c.workers); }});
    return f;
  }();
  return fields;
}

inline const Field& field(const std::string& key) {
  for (const Field& f : schema())
    if (f.key == key) return f;
  throw ConfigError(key, "unknown key");
}

}  // namespace detail

/// Applies one `key=value` assignment.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(detail::trim(assignment), "expected key=value");
  const std::string key = detail::trim(std::string_view(assignment).substr(0, eq));
  const std::string value = detail::trim(std::string_view(assignment).substr(eq + 1));
  detail::field(key).set(cfg, value);
}

inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    if (line.find('=') == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected key=value, got '" + detail::trim(line) + "'");
    apply_override(cfg, line);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read '" + path + "'");
  return parse_config(in);
}

/// Every key with its current value, in schema order. Parses back to `cfg`.
inline std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : detail::schema()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

inline std::string describe_schema() {
  const ExperimentConfig defaults;
  std::string out;
  for (const auto& f : detail::schema()) out += f.key + " = " + f.get(defaults) + "    # " + f.doc + "\n";
  return out;
}

/// Field-level checks run before any compute.
inline void validate(const ExperimentConfig& c) {
  const BackboneConfig& b = c.backbone;
  auto require = [](bool ok, const char* key, const std::string& msg) {
    if (!ok) throw ConfigError(key, msg);
  };
  require(b.layers >= 1, "backbone.layers", "must be at least 1");
  require(b.d_vision >= 2, "backbone.d_vision", "must be at least 2");
  require(b.d_text >= 2, "backbone.d_text", "must be at least 2");
  require(b.heads >= 1, "backbone.heads", "must be at least 1");
  require(b.d_vision % b.heads == 0, "backbone.heads", "must divide backbone.d_vision");
  require(b.d_text % b.heads == 0, "backbone.heads", "must divide backbone.d_text");
  require(b.mlp_ratio >= 1, "backbone.mlp_ratio", "must be at least 1");
  require(b.vocab >= 2, "backbone.vocab", "must be at least 2");
  require(b.channels >= 1, "backbone.image_channels", "must be at least 1");
  require(b.patch >= 1, "backbone.patch", "must be at least 1");
  require(b.image_height >= b.patch && b.image_height % b.patch == 0, "backbone.image_height",
          "must be a positive multiple of backbone.patch");
  require(b.image_width >= b.patch && b.image_width % b.patch == 0, "backbone.image_width",
          "must be a positive multiple of backbone.patch");
  require(b.text_length >= 1, "backbone.text_length", "must be at least 1");

  const ModelConfig& m = c.model;
  require(m.prompt_len >= 1, "prompt.length", "must be at least 1");
  require(m.prompt_init_std >= 0.0, "prompt.init_std", "must be non-negative");
  for (std::size_t l : m.interaction_layers)
    require(l < b.layers, "schedule.layers",
            "layer " + std::to_string(l) + " is out of range for " + std::to_string(b.layers) + " layers (0-based)");
  require(m.mode == AblationMode::Baseline || !m.interaction_layers.empty(), "schedule.layers",
          "prompted modes need at least one interaction layer");
  require(m.similarity.gate_temperature > 0.0, "similarity.gate_temperature", "must be positive");
  require(!m.similarity.mmd_bandwidth || *m.similarity.mmd_bandwidth > 0.0, "similarity.mmd_bandwidth",
          "must be positive or 'median'");
  require(m.temperature > 0.0, "objective.temperature", "must be positive");

  const SyntheticTaskSpec& t = c.task;
  require(t.effective_classes() >= 2, "task.classes", "must be at least 2");
  require(t.noise >= 0.0 && t.noise < 0.5, "task.noise", "must lie in [0, 0.5)");
  require(t.pixel_noise >= 0.0, "task.pixel_noise", "must be non-negative");
  require(t.token_noise >= 0.0 && t.token_noise <= 1.0, "task.token_noise", "must lie in [0, 1]");
  require(t.n_train >= 1, "task.n_train", "must be at least 1");
  require(t.n_val >= 1, "task.n_val", "must be at least 1");
  require(t.n_test >= 1, "task.n_test", "must be at least 1");
  try {
    validate_task(t, b);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("task.classes", e.what());
  }

  const OptimConfig& o = c.optim;
  require(o.lr > 0.0, "optim.lr", "must be positive");
  require(o.beta1 >= 0.0 && o.beta1 < 1.0, "optim.beta1", "must lie in [0, 1)");
  require(o.beta2 >= 0.0 && o.beta2 < 1.0, "optim.beta2", "must lie in [0, 1)");
  require(o.eps > 0.0, "optim.eps", "must be positive");
  require(o.batch >= 1, "optim.batch", "must be at least 1");
  require(!c.output_dir.empty(), "output.dir", "must not be empty");
}

}  // namespace epic
