// SPDX-License-Identifier: Apache-2.0
//
// The prompted dual-branch forward pass for each ablation mode.
//
//   Baseline           frozen backbone, no prompts
//   PTuning            temporal prompts; each interaction layer's post-layer
//                      prompt is reused unchanged at the next one
//   LinearInteraction  next prompts from one linear map over [p̂_v | p̂_t]
//   Epic               next prompts from the Interaction Hub

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epic/autodiff.hpp"
#include "epic/backbone.hpp"
#include "epic/interaction_hub.hpp"
#include "epic/objective.hpp"

namespace epic {

enum class AblationMode { Baseline, PTuning, LinearInteraction, Epic };

inline const char* mode_name(AblationMode m) {
  switch (m) {
    case AblationMode::Baseline: return "baseline";
    case AblationMode::PTuning: return "ptuning";
    case AblationMode::LinearInteraction: return "linear";
    case AblationMode::Epic: return "epic";
  }
  return "?";
}

inline std::optional<AblationMode> parse_mode(const std::string& s) {
  if (s == "baseline") return AblationMode::Baseline;
  if (s == "ptuning") return AblationMode::PTuning;
  if (s == "linear") return AblationMode::LinearInteraction;
  if (s == "epic") return AblationMode::Epic;
  return std::nullopt;
}

inline const std::vector<AblationMode>& all_modes() {
  static const std::vector<AblationMode> modes = {AblationMode::Baseline, AblationMode::PTuning,
                                                  AblationMode::LinearInteraction, AblationMode::Epic};
  return modes;
}

struct ModelConfig {
  AblationMode mode = AblationMode::Epic;
  std::vector<std::size_t> interaction_layers = {2, 3, 4};
  std::size_t prompt_len = 3;
  double prompt_init_std = 0.02;
  SimilarityConfig similarity;
  double temperature = 0.07;
  bool train_temperature = false;
};

/// Column-wise concatenation and split, expressed with row primitives.
inline Var concat_cols(const Var& a, const Var& b) {
  return transpose(concat_rows({transpose(a), transpose(b)}));
}

inline std::pair<Var, Var> split_cols(const Var& a, std::size_t left) {
  auto parts = split_rows(transpose(a), {left, a.value().cols() - left});
  return {transpose(parts[0]), transpose(parts[1])};
}

/// Per-interaction-layer record of the forward pass, for inspection.
struct ForwardTrace {
  struct InteractionStep {
    std::size_t layer = 0;
    std::size_t vision_rows_in = 0;
    Tensor post_vision, post_text;   // p̂ (text left empty when not computed)
    std::optional<HubOutput> hub;
  };
  std::vector<Tensor> vision_features;  // u_v after every layer run
  std::vector<InteractionStep> steps;
};

/// Frozen features entering layer `start` (the first interaction layer, or
/// the full stack for Baseline). They never depend on trainable state.
struct FrozenPrefix {
  Tensor vision;
  Tensor text;
  std::size_t start = 0;
};

class PromptedModel {
 public:
  PromptedModel(const FrozenBackbone& backbone, ModelConfig cfg, std::uint64_t seed)
      : backbone_(backbone), cfg_(std::move(cfg)) {
    const BackboneConfig& bb = backbone.config();
    if (cfg_.prompt_len < 1) throw std::invalid_argument("model: prompt_len must be at least 1");
    if (cfg_.mode != AblationMode::Baseline && cfg_.interaction_layers.empty())
      throw std::invalid_argument(std::string("model: mode '") + mode_name(cfg_.mode) +
                                  "' needs at least one interaction layer");
    schedule_ = cfg_.mode == AblationMode::Baseline ? LayerSchedule({}, bb.layers)
                                                    : LayerSchedule(cfg_.interaction_layers, bb.layers);
    hub_ = HubParams::init({cfg_.prompt_len, bb.d_vision, bb.d_text}, cfg_.prompt_init_std, seed);
    const std::size_t joint = bb.d_vision + bb.d_text;
    std::mt19937_64 rng = seeded_stream(seed, 0x11AE);
    linear_weight_ = Parameter("linear.weight", gaussian({joint, joint}, 0.0, kMlpInitStd, rng), Role::Trainable);
    linear_bias_ = Parameter("linear.bias", Tensor({1, joint}), Role::Trainable);
    temperature_ = Parameter("classifier.temperature", Tensor(Shape{1}, cfg_.temperature),
                             cfg_.train_temperature ? Role::Trainable : Role::Frozen);
    if (!(cfg_.temperature > 0.0)) throw std::invalid_argument("model: temperature must be positive");
  }

  PromptedModel(const PromptedModel&) = delete;
  PromptedModel& operator=(const PromptedModel&) = delete;

  [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const LayerSchedule& schedule() const noexcept { return schedule_; }
  [[nodiscard]] const FrozenBackbone& backbone() const noexcept { return backbone_; }
  [[nodiscard]] HubParams& hub() noexcept { return hub_; }
  [[nodiscard]] Parameter& temperature() noexcept { return temperature_; }

  [[nodiscard]] FrozenPrefix prefix(const ImageTextPair& pair) const {
    auto [v, t] = backbone_.embed(pair);
    FrozenPrefix p;
    p.start = schedule_.empty() ? backbone_.layers() : schedule_.first();
    p.vision = backbone_.run_layers(Modality::Vision, Var::constant(std::move(v)), 0, p.start).value();
    p.text = backbone_.run_layers(Modality::Text, Var::constant(std::move(t)), 0, std::min(p.start, text_end())).value();
    return p;
  }

  /// Raw embeddings, for passes that start at layer 0.
  [[nodiscard]] FrozenPrefix embedding_prefix(const ImageTextPair& pair) const {
    auto [v, t] = backbone_.embed(pair);
    return {std::move(v), std::move(t), 0};
  }

  /// Vision readout x (1 x d_v) from a frozen prefix.
  Var readout(Tape& tape, const FrozenPrefix& prefix, const GateOverride& force = {},
              ForwardTrace* trace = nullptr) {
    const std::size_t L = backbone_.layers();
    const std::size_t P = cfg_.prompt_len;
    const auto& layers = schedule_.interaction_layers();
    const std::size_t text_stop = text_end();
    Var uv = Var::constant(prefix.vision);
    Var ut = Var::constant(prefix.text);
    Var pv, pt;
    if (!schedule_.empty()) {
      pt = tape.leaf(hub_.prompt_text);
      pv = bootstrap_vision_prompt(tape, hub_, pt);
    }
    std::size_t k = 0;  // index of the next interaction layer
    for (std::size_t l = prefix.start; l < L; ++l) {
      const bool run_text = l < text_stop;
      if (!schedule_.is_interaction(l)) {
        uv = backbone_.layer_forward(Modality::Vision, l, uv);
        if (run_text) ut = backbone_.layer_forward(Modality::Text, l, ut);
        if (trace) trace->vision_features.push_back(uv.value());
        continue;
      }
      ForwardTrace::InteractionStep step;
      step.layer = l;
      const std::size_t nv = uv.value().rows(), nt = ut.value().rows();
      Var in_v = concat_rows({pv, uv});
      step.vision_rows_in = in_v.value().rows();
      auto out_v = split_rows(backbone_.layer_forward(Modality::Vision, l, in_v), {P, nv});
      Var post_v = out_v[0];
      uv = out_v[1];
      Var post_t;
      if (run_text) {
        auto out_t = split_rows(backbone_.layer_forward(Modality::Text, l, concat_rows({pt, ut})), {P, nt});
        post_t = out_t[0];
        ut = out_t[1];
      }
      const bool has_next = k + 1 < layers.size();
      if (has_next) {
        switch (cfg_.mode) {
          case AblationMode::PTuning:
            pv = post_v;
            break;
          case AblationMode::LinearInteraction: {
            Var joint = add(matmul(concat_cols(post_v, post_t), tape.leaf(linear_weight_)), tape.leaf(linear_bias_));
            std::tie(pv, pt) = split_cols(joint, backbone_.width(Modality::Vision));
            break;
          }
          case AblationMode::Epic: {
            HubOutput out = hub_step(tape, post_v, post_t, hub_, cfg_.similarity, force);
            pv = out.vision.next;
            pt = out.text.next;
            if (trace) step.hub = std::move(out);
            break;
          }
          case AblationMode::Baseline:
            break;
        }
      }
      if (trace) {
        step.post_vision = post_v.value();
        if (post_t.defined()) step.post_text = post_t.value();
        trace->steps.push_back(std::move(step));
        trace->vision_features.push_back(uv.value());
      }
      ++k;
    }
    return backbone_.pooled_output(Modality::Vision, uv);
  }

  [[nodiscard]] Var temperature_var(Tape& tape) { return tape.leaf(temperature_); }

  /// Parameters updated by training in this mode.
  [[nodiscard]] std::vector<Parameter*> trainable_parameters() {
    std::vector<Parameter*> out;
    auto push = [&](Parameter& p) { out.push_back(&p); };
    switch (cfg_.mode) {
      case AblationMode::Baseline:
        break;
      case AblationMode::PTuning:
        hub_.for_each_prompt_parameter(push);
        break;
      case AblationMode::LinearInteraction:
        hub_.for_each_prompt_parameter(push);
        push(linear_weight_);
        push(linear_bias_);
        break;
      case AblationMode::Epic:
        hub_.for_each_parameter(push);
        break;
    }
    if (temperature_.requires_grad()) push(temperature_);
    return out;
  }

  /// Every non-backbone parameter, in checkpoint order, whatever the mode.
  void for_each_state_parameter(const std::function<void(Parameter&)>& fn) {
    hub_.for_each_parameter(fn);
    fn(linear_weight_);
    fn(linear_bias_);
    fn(temperature_);
  }

  [[nodiscard]] std::size_t trainable_count() {
    std::size_t n = 0;
    for (Parameter* p : trainable_parameters()) n += p->value.size();
    return n;
  }

 private:
  /// Text layers are needed only while a later hub or linear map still reads
  /// p̂_t, i.e. up to and including the second-to-last interaction layer.
  [[nodiscard]] std::size_t text_end() const {
    const auto& layers = schedule_.interaction_layers();
    if (cfg_.mode == AblationMode::Baseline || cfg_.mode == AblationMode::PTuning || layers.size() < 2) return 0;
    return layers[layers.size() - 2] + 1;
  }

  const FrozenBackbone& backbone_;
  ModelConfig cfg_;
  LayerSchedule schedule_;
  HubParams hub_;
  Parameter linear_weight_, linear_bias_;
  Parameter temperature_;
};

/// Closed-form trainable parameter count for a configuration. Independent of
/// how many interaction layers are scheduled.
inline std::size_t analytic_trainable_count(const BackboneConfig& bb, const ModelConfig& m) {
  const std::size_t P = m.prompt_len, dv = bb.d_vision, dt = bb.d_text;
  const std::size_t tau = m.train_temperature ? 1 : 0;
  if (m.mode == AblationMode::Baseline) return tau;
  const std::size_t prompts = P * dt + dt * dv + dv;
  auto mlp = [](std::size_t in, std::size_t hidden, std::size_t out) { return in * hidden + hidden + hidden * out + out; };
  switch (m.mode) {
    case AblationMode::PTuning:
      return prompts + tau;
    case AblationMode::LinearInteraction:
      return prompts + (dv + dt) * (dv + dt) + (dv + dt) + tau;
    case AblationMode::Epic: {
      const std::size_t mid = (dv + dt) / 2;
      return prompts + mlp(dv, dv / 2, dv) + mlp(dt, dt / 2, dt) + mlp(dt, mid, dv) + mlp(dv, mid, dt) + tau;
    }
    case AblationMode::Baseline:
      break;
  }
  return tau;
}

}  // namespace epic
