// SPDX-License-Identifier: Apache-2.0
//
// Class-text classification head, losses and evaluation metrics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epic/autodiff.hpp"
#include "epic/backbone.hpp"

namespace epic {

inline constexpr double kProbClamp = 1e-12;

/// Class-name prompt stand-ins: one fixed token sequence per class, encoded
/// once by the frozen text branch without temporal prompts.
struct ClassTextBank {
  std::vector<std::vector<std::size_t>> sequences;
  Tensor embeddings;  // K x d_text

  [[nodiscard]] std::size_t classes() const noexcept { return sequences.size(); }

  static ClassTextBank build(const FrozenBackbone& backbone, std::vector<std::vector<std::size_t>> sequences) {
    if (sequences.size() < 2) throw std::invalid_argument("class bank: need at least two classes");
    ClassTextBank bank;
    const std::size_t d = backbone.width(Modality::Text);
    bank.embeddings = Tensor({sequences.size(), d});
    for (std::size_t c = 0; c < sequences.size(); ++c) {
      const Tensor h = backbone.encode(Modality::Text, backbone.embed_text(sequences[c]));
      for (std::size_t j = 0; j < d; ++j) bank.embeddings(c, j) = h[j];
    }
    bank.sequences = std::move(sequences);
    return bank;
  }
};

/// Cosine similarity of the row vector x (1 x d) with every row of H (K x d),
/// as a (1 x K) row.
inline Var cosine_rows(const Var& x, const Var& bank) {
  const Tensor& X = x.value();
  const Tensor& H = bank.value();
  if (X.size() != H.cols())
    throw ShapeError("cosine_rows: vector " + shape_str(X.shape()) + " vs bank " + shape_str(H.shape()));
  const std::size_t k = H.rows(), d = H.cols();
  Tensor out({1, k});
  double xx = 0.0;
  for (std::size_t j = 0; j < d; ++j) xx += X[j] * X[j];
  const double nx = std::sqrt(xx);
  std::vector<double> nh(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double hh = 0.0, xh = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      hh += H(c, j) * H(c, j);
      xh += X[j] * H(c, j);
    }
    nh[c] = std::sqrt(hh);
    out[c] = (nx > 0.0 && nh[c] > 0.0) ? xh / (nx * nh[c]) : 0.0;
  }
  auto sims = std::make_shared<const Tensor>(out);
  return custom_op("cosine_rows", {&x, &bank}, std::move(out),
                   [px = x.shared(), ph = bank.shared(), sims, nx, nh, k, d](const Tensor& g,
                                                                           std::span<Tensor* const> gi) {
                     const Tensor& X = *px;
                     const Tensor& H = *ph;
                     for (std::size_t c = 0; c < k; ++c) {
                       if (nx == 0.0 || nh[c] == 0.0) continue;
                       const double s = (*sims)[c];
                       for (std::size_t j = 0; j < d; ++j) {
                         if (gi[0]) (*gi[0])[j] += g[c] * (H(c, j) / (nx * nh[c]) - s * X[j] / (nx * nx));
                         if (gi[1])
                           (*gi[1])[c * d + j] += g[c] * (X[j] / (nx * nh[c]) - s * H(c, j) / (nh[c] * nh[c]));
                       }
                     }
                   },
                   detail::saved(x));
}

/// x / tau for a trainable scalar tau.
inline Var divide_by_scalar(const Var& x, const Var& tau) {
  const double t = tau.value().item();
  if (!(t > 0.0)) throw std::invalid_argument("temperature must be positive");
  Tensor out = x.value();
  for (double& v : out.values()) v /= t;
  return custom_op("divide_by_scalar", {&x, &tau}, std::move(out),
                   [px = x.shared(), t](const Tensor& g, std::span<Tensor* const> gi) {
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       if (gi[0]) (*gi[0])[i] += g[i] / t;
                       if (gi[1]) (*gi[1])[0] -= g[i] * (*px)[i] / (t * t);
                     }
                   },
                   detail::saved(x));
}

/// Similarity logits cos(x, h_c) / tau. `tau` may be a constant or tracked.
inline Var class_logits(const Var& readout, const ClassTextBank& bank, const Var& tau) {
  Var sims = cosine_rows(readout, Var::view(bank.embeddings));
  if (!tau.tracked()) {
    const double t = tau.value().item();
    if (!(t > 0.0)) throw std::invalid_argument("temperature must be positive");
    return scale(sims, 1.0 / t);
  }
  return divide_by_scalar(sims, tau);
}

/// Softmax over temperature-scaled cosine similarities (1 x K).
inline Var predict(const Var& readout, const ClassTextBank& bank, const Var& tau) {
  return softmax(class_logits(readout, bank, tau), 1);
}

inline Var predict(const Var& readout, const ClassTextBank& bank, double tau) {
  return predict(readout, bank, Var::constant(Tensor(Shape{1}, tau)));
}

inline Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  auto y = std::make_shared<const Tensor>(out);
  return custom_op("sigmoid", {&a}, std::move(out),
                   [y](const Tensor& g, std::span<Tensor* const> gi) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
                   },
                   y->size());
}

/// Independent per-class marginals sigmoid(cos(x, h_c) / tau), for multi-label tasks.
inline Var predict_multi(const Var& readout, const ClassTextBank& bank, const Var& tau) {
  return sigmoid(class_logits(readout, bank, tau));
}

namespace detail {

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

/// d/dp of log(clamp(p)); zero where the clamp is active.
inline double dlog_clamped(double p) { return (p > kProbClamp && p < 1.0 - kProbClamp) ? 1.0 / p : 0.0; }

/// Weighted sum over entries of -[y log p + (1 - y) log(1 - p)] (bce) or
/// -y log p (ce), scaled by `weight`.
inline Var log_loss(std::string_view name, const Var& probs, std::vector<double> targets, bool bce, double weight) {
  const Tensor& P = probs.value();
  if (targets.size() != P.size())
    throw ShapeError(std::string(name) + ": " + std::to_string(targets.size()) + " targets for probabilities " +
                     shape_str(P.shape()));
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double p = clamp_prob(P[i]);
    loss -= targets[i] * std::log(p);
    if (bce) loss -= (1.0 - targets[i]) * std::log(clamp_prob(1.0 - P[i]));
  }
  return custom_op(name, {&probs}, Tensor(Shape{1}, weight * loss),
                   [pp = probs.shared(), targets = std::move(targets), bce, weight](const Tensor& g,
                                                                                  std::span<Tensor* const> gi) {
                     for (std::size_t i = 0; i < targets.size(); ++i) {
                       const double p = (*pp)[i];
                       double d = -targets[i] * dlog_clamped(p);
                       if (bce) d += (1.0 - targets[i]) * dlog_clamped(1.0 - p);
                       (*gi[0])[i] += g[0] * weight * d;
                     }
                   },
                   P.size());
}

}  // namespace detail

/// Single-label loss for one sample. Default: -log p[label]. Literal form:
/// mean over classes of the binary cross-entropy against the one-hot label.
inline Var loss_uni(const Var& probs, std::size_t label, bool literal = false) {
  const std::size_t k = probs.value().size();
  if (label >= k)
    throw std::out_of_range("loss_uni: label " + std::to_string(label) + " outside " + std::to_string(k) + " classes");
  std::vector<double> onehot(k, 0.0);
  onehot[label] = 1.0;
  if (literal) return detail::log_loss("loss_uni_literal", probs, std::move(onehot), true, 1.0 / static_cast<double>(k));
  return detail::log_loss("loss_uni", probs, std::move(onehot), false, 1.0);
}

/// Multi-label loss for one sample. Default: binary cross-entropy averaged
/// over classes. Literal form: -sum_c y_c log p_c.
inline Var loss_multi(const Var& probs, const std::vector<std::uint8_t>& labels, bool literal = false) {
  std::vector<double> y(labels.begin(), labels.end());
  for (double v : y)
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("loss_multi: labels must be binary");
  const double k = static_cast<double>(labels.size());
  if (literal) return detail::log_loss("loss_multi_literal", probs, std::move(y), false, 1.0);
  return detail::log_loss("loss_multi", probs, std::move(y), true, 1.0 / k);
}

enum class TaskKind { Uni, Multi, Entailment3 };

inline const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Uni: return "uni";
    case TaskKind::Multi: return "multi";
    case TaskKind::Entailment3: return "entailment3";
  }
  return "?";
}

struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> f1_micro;
  std::optional<double> f1_macro;

  /// (name, value) pairs in a fixed order.
  [[nodiscard]] std::vector<std::pair<std::string, double>> entries() const {
    std::vector<std::pair<std::string, double>> out;
    if (accuracy) out.emplace_back("accuracy", *accuracy);
    if (f1_micro) out.emplace_back("f1_micro", *f1_micro);
    if (f1_macro) out.emplace_back("f1_macro", *f1_macro);
    return out;
  }

  /// The metric ablations and sweeps compare on.
  [[nodiscard]] double headline() const { return accuracy ? *accuracy : f1_micro.value_or(0.0); }
};

inline std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::max_element(t.values().begin(), t.values().end()) - t.values().begin());
}

/// Fraction of argmax matches.
inline Metrics accuracy_metrics(const std::vector<Tensor>& probs, const std::vector<std::size_t>& labels) {
  if (probs.empty() || probs.size() != labels.size()) throw std::invalid_argument("metrics: empty or mismatched set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) hits += argmax(probs[i]) == labels[i];
  Metrics m;
  m.accuracy = static_cast<double>(hits) / static_cast<double>(probs.size());
  return m;
}

/// F1-micro pools TP/FP/FN over classes; F1-macro averages per-class F1,
/// where a class with no positives and no predictions scores 0.
inline Metrics f1_metrics(const std::vector<std::vector<std::uint8_t>>& predicted,
                          const std::vector<std::vector<std::uint8_t>>& labels) {
  if (predicted.empty() || predicted.size() != labels.size())
    throw std::invalid_argument("metrics: empty or mismatched set");
  const std::size_t k = labels[0].size();
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t c = 0; c < k; ++c) {
      const bool p = predicted[i][c] != 0, y = labels[i][c] != 0;
      tp[c] += p && y;
      fp[c] += p && !y;
      fn[c] += !p && y;
    }
  auto f1 = [](std::size_t t, std::size_t f_p, std::size_t f_n) {
    const std::size_t denom = 2 * t + f_p + f_n;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(t) / static_cast<double>(denom);
  };
  std::size_t TP = 0, FP = 0, FN = 0;
  double macro = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    TP += tp[c];
    FP += fp[c];
    FN += fn[c];
    macro += f1(tp[c], fp[c], fn[c]);
  }
  Metrics m;
  m.f1_micro = f1(TP, FP, FN);
  m.f1_macro = macro / static_cast<double>(k);
  return m;
}

/// Thresholds per-class probabilities at 0.5.
inline std::vector<std::uint8_t> threshold(const Tensor& probs, double cut = 0.5) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= cut;
  return out;
}

}  // namespace epic
