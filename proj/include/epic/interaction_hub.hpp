// SPDX-License-Identifier: Apache-2.0
//
// Prompt bootstrap and the similarity-gated Interaction Hub.
//
// After an interaction layer each branch emits post-layer prompts p̂_v, p̂_t.
// The hub projects the other modality's prompt into this modality's space,
// scores intra- and inter-modality similarity per feature column (or per
// token row), turns the scores into softmax gates z and r, and mixes
//
//     p_next = z ⊙ p̂ + (1 - z) ⊙ r ⊙ p̃
//
// One HubParams bundle serves every interaction layer.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epic/autodiff.hpp"
#include "epic/backbone.hpp"
#include "epic/tensor.hpp"

namespace epic {

enum class SimilarityFamily { Cosine, Mmd, CovPearson };
enum class GateAxis { Feature, Token };
/// Intra compares a prompt with its own MLP image; inter compares it with
/// the projected prompt of the other modality. Only cov_pearson
/// distinguishes the two (covariance vs Pearson correlation).
enum class SimilarityRole { Intra, Inter };

inline const char* family_name(SimilarityFamily f) {
  switch (f) {
    case SimilarityFamily::Cosine: return "cos";
    case SimilarityFamily::Mmd: return "mmd";
    case SimilarityFamily::CovPearson: return "cov_pearson";
  }
  return "?";
}

inline std::optional<SimilarityFamily> parse_family(const std::string& s) {
  if (s == "cos") return SimilarityFamily::Cosine;
  if (s == "mmd") return SimilarityFamily::Mmd;
  if (s == "cov_pearson") return SimilarityFamily::CovPearson;
  return std::nullopt;
}

struct SimilarityConfig {
  SimilarityFamily family = SimilarityFamily::Cosine;
  GateAxis gate_axis = GateAxis::Feature;
  /// RBF bandwidth for MMD; unset selects the median heuristic per call.
  std::optional<double> mmd_bandwidth;
  /// Gate logits are divided by this before the softmax. 1 is the literal mix.
  double gate_temperature = 1.0;
};

namespace sim {

inline constexpr double kZeroNorm = 1e-12;
inline constexpr double kBandwidthFloor = 1e-6;

/// Each scorer returns the score of two equal-length slices and, when the
/// gradient spans are non-empty, writes d(score)/dx and d(score)/dy.
inline double cosine(std::span<const double> x, std::span<const double> y, std::span<double> dx,
                     std::span<double> dy) {
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  const double nx = std::sqrt(xx), ny = std::sqrt(yy);
  if (nx < kZeroNorm || ny < kZeroNorm) {
    std::fill(dx.begin(), dx.end(), 0.0);
    std::fill(dy.begin(), dy.end(), 0.0);
    return 0.0;
  }
  const double c = xy / (nx * ny);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = y[i] / (nx * ny) - c * x[i] / xx;
  for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = x[i] / (nx * ny) - c * y[i] / yy;
  return c;
}

/// Population covariance.
inline double covariance(std::span<const double> x, std::span<const double> y, std::span<double> dx,
                         std::span<double> dy) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double c = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) c += (x[i] - mx) * (y[i] - my);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = (y[i] - my) / n;
  for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = (x[i] - mx) / n;
  return c / n;
}

/// Pearson correlation: cosine of the centred slices.
inline double pearson(std::span<const double> x, std::span<const double> y, std::span<double> dx,
                      std::span<double> dy) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  std::vector<double> xc(n), yc(n);
  for (std::size_t i = 0; i < n; ++i) {
    xc[i] = x[i] - mx;
    yc[i] = y[i] - my;
  }
  const double r = cosine(xc, yc, dx, dy);
  // Chain through the centring projection.
  auto centre = [](std::span<double> g) {
    if (g.empty()) return;
    double m = 0.0;
    for (double v : g) m += v;
    m /= static_cast<double>(g.size());
    for (double& v : g) v -= m;
  };
  centre(dx);
  centre(dy);
  return r;
}

/// Median of pairwise |a - b| over the pooled samples, with the pooled
/// indices of the pair(s) that realise it. Weights are 1 (odd pair count)
/// or 1/2 each (even).
struct MedianBandwidth {
  double sigma = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> weights;
  bool floored = false;
};

inline MedianBandwidth median_bandwidth(std::span<const double> pooled) {
  struct PairDist {
    double d;
    std::size_t i, j;
  };
  std::vector<PairDist> all;
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = i + 1; j < pooled.size(); ++j) all.push_back({std::abs(pooled[i] - pooled[j]), i, j});
  MedianBandwidth mb;
  if (all.empty()) {
    mb.sigma = kBandwidthFloor;
    mb.floored = true;
    return mb;
  }
  auto less = [](const PairDist& a, const PairDist& b) {
    return a.d < b.d || (a.d == b.d && (a.i < b.i || (a.i == b.i && a.j < b.j)));
  };
  std::sort(all.begin(), all.end(), less);
  const std::size_t m = all.size();
  if (m % 2 == 1) {
    mb.sigma = all[m / 2].d;
    mb.pairs = {{all[m / 2].i, all[m / 2].j}};
    mb.weights = {1.0};
  } else {
    mb.sigma = 0.5 * (all[m / 2 - 1].d + all[m / 2].d);
    mb.pairs = {{all[m / 2 - 1].i, all[m / 2 - 1].j}, {all[m / 2].i, all[m / 2].j}};
    mb.weights = {0.5, 0.5};
  }
  if (mb.sigma < kBandwidthFloor) {
    mb.sigma = kBandwidthFloor;
    mb.floored = true;
  }
  return mb;
}

/// exp(-MMD²) between the two slices viewed as scalar sample sets, using the
/// biased (V-statistic) estimator with an RBF kernel.
inline double mmd(std::span<const double> x, std::span<const double> y, std::span<double> dx,
                  std::span<double> dy, std::optional<double> fixed_bandwidth) {
  const std::size_t n = x.size(), m = y.size();
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  MedianBandwidth mb;
  if (fixed_bandwidth) {
    mb.sigma = *fixed_bandwidth;
    mb.floored = true;  // constant: no gradient through sigma
  } else {
    mb = median_bandwidth(pooled);
  }
  const double s2 = mb.sigma * mb.sigma;
  const bool want_grad = !dx.empty() || !dy.empty();
  std::vector<double> dpool(want_grad ? n + m : 0, 0.0);
  double dsigma = 0.0;
  auto term = [&](std::size_t i, std::size_t j, double w) {
    const double d = pooled[i] - pooled[j];
    const double k = std::exp(-d * d / (2.0 * s2));
    if (want_grad) {
      dpool[i] += w * (-k * d / s2);
      dpool[j] += w * (k * d / s2);
      dsigma += w * k * d * d / (s2 * mb.sigma);
    }
    return w * k;
  };
  const double wxx = 1.0 / static_cast<double>(n * n);
  const double wyy = 1.0 / static_cast<double>(m * m);
  const double wxy = -2.0 / static_cast<double>(n * m);
  double mmd2 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) mmd2 += term(i, j, wxx);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) mmd2 += term(n + i, n + j, wyy);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) mmd2 += term(i, n + j, wxy);
  mmd2 = std::max(mmd2, 0.0);
  const double score = std::exp(-mmd2);
  if (want_grad) {
    if (!mb.floored)
      for (std::size_t p = 0; p < mb.pairs.size(); ++p) {
        const auto [i, j] = mb.pairs[p];
        const double sgn = pooled[i] >= pooled[j] ? 1.0 : -1.0;
        dpool[i] += dsigma * mb.weights[p] * sgn;
        dpool[j] -= dsigma * mb.weights[p] * sgn;
      }
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = -score * dpool[i];
    for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = -score * dpool[n + i];
  }
  return score;
}

}  // namespace sim

/// Per-slice similarity of A and B (same shape, prompt_len x d). Feature
/// axis: compares columns, returns (1 x d). Token axis: compares rows,
/// returns (prompt_len x 1).
inline Var similarity(const Var& a, const Var& b, const SimilarityConfig& cfg,
                      SimilarityRole role = SimilarityRole::Inter) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || A.shape() != B.shape())
    throw ShapeError("similarity: shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()) +
                     " differ");
  const std::size_t rows = A.rows(), cols = A.cols();
  const bool by_column = cfg.gate_axis == GateAxis::Feature;
  const std::size_t slices = by_column ? cols : rows;
  const std::size_t len = by_column ? rows : cols;

  auto gather = [by_column, cols, len](const Tensor& t, std::size_t s, std::vector<double>& buf) {
    buf.resize(len);
    for (std::size_t i = 0; i < len; ++i) buf[i] = by_column ? t[i * cols + s] : t[s * cols + i];
  };
  auto score = [family = cfg.family, bw = cfg.mmd_bandwidth, role](std::span<const double> x,
                                                                  std::span<const double> y, std::span<double> dx,
                                                                  std::span<double> dy) {
    switch (family) {
      case SimilarityFamily::Cosine: return sim::cosine(x, y, dx, dy);
      case SimilarityFamily::Mmd: return sim::mmd(x, y, dx, dy, bw);
      case SimilarityFamily::CovPearson:
        return role == SimilarityRole::Intra ? sim::covariance(x, y, dx, dy) : sim::pearson(x, y, dx, dy);
    }
    return 0.0;
  };

  Tensor out(by_column ? Shape{1, cols} : Shape{rows, 1});
  std::vector<double> xs, ys;
  for (std::size_t s = 0; s < slices; ++s) {
    gather(A, s, xs);
    gather(B, s, ys);
    out[s] = score(xs, ys, {}, {});
  }
  return custom_op("similarity", {&a, &b}, std::move(out),
                   [pa = a.shared(), pb = b.shared(), score, gather, slices, len, cols, by_column](
                       const Tensor& g, std::span<Tensor* const> gi) {
                     std::vector<double> xs, ys, dx(len), dy(len);
                     for (std::size_t s = 0; s < slices; ++s) {
                       gather(*pa, s, xs);
                       gather(*pb, s, ys);
                       score(xs, ys, dx, dy);
                       for (std::size_t i = 0; i < len; ++i) {
                         const std::size_t idx = by_column ? i * cols + s : s * cols + i;
                         if (gi[0]) (*gi[0])[idx] += g[s] * dx[i];
                         if (gi[1]) (*gi[1])[idx] += g[s] * dy[i];
                       }
                     }
                   },
                   detail::saved(a) + detail::saved(b));
}

inline double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

inline constexpr double kMlpInitStd = 0.02;

/// Two-layer perceptron: in -> hidden (ReLU) -> out.
struct Mlp {
  Parameter w1, b1, w2, b2;

  static Mlp make(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, double std,
                  std::mt19937_64& rng) {
    Mlp m;
    m.w1 = Parameter(name + ".w1", gaussian({in, hidden}, 0.0, std, rng), Role::Trainable);
    m.b1 = Parameter(name + ".b1", Tensor({1, hidden}), Role::Trainable);
    m.w2 = Parameter(name + ".w2", gaussian({hidden, out}, 0.0, std, rng), Role::Trainable);
    m.b2 = Parameter(name + ".b2", Tensor({1, out}), Role::Trainable);
    return m;
  }

  Var forward(Tape& tape, const Var& x) {
    Var h = relu(add(matmul(x, tape.leaf(w1)), tape.leaf(b1)));
    return add(matmul(h, tape.leaf(w2)), tape.leaf(b2));
  }

  template <class Fn>
  void for_each(Fn&& fn) {
    fn(w1);
    fn(b1);
    fn(w2);
    fn(b2);
  }
};

struct HubDims {
  std::size_t prompt_len = 3;
  std::size_t d_vision = 32;
  std::size_t d_text = 32;
};

/// The single trainable bundle shared by every interaction layer.
struct HubParams {
  HubDims dims;
  Parameter prompt_text;                   // p_t at the first interaction layer
  Parameter bootstrap_weight, bootstrap_bias;  // text prompt -> vision prompt
  Mlp intra_vision, intra_text;
  Mlp text_to_vision, vision_to_text;

  static HubParams init(const HubDims& d, double prompt_std, std::uint64_t seed) {
    if (d.prompt_len < 1) throw std::invalid_argument("hub: prompt_len must be at least 1");
    std::mt19937_64 rng = seeded_stream(seed, 0x4B1B);
    HubParams h;
    h.dims = d;
    h.prompt_text = Parameter("hub.prompt_text", gaussian({d.prompt_len, d.d_text}, 0.0, prompt_std, rng),
                              Role::Trainable);
    h.bootstrap_weight = Parameter(
        "hub.bootstrap.weight",
        gaussian({d.d_text, d.d_vision}, 0.0, fan_in_std(d.d_text), rng), Role::Trainable);
    h.bootstrap_bias = Parameter("hub.bootstrap.bias", Tensor({1, d.d_vision}), Role::Trainable);
    h.intra_vision = Mlp::make("hub.intra_vision", d.d_vision, d.d_vision / 2, d.d_vision, kMlpInitStd, rng);
    h.intra_text = Mlp::make("hub.intra_text", d.d_text, d.d_text / 2, d.d_text, kMlpInitStd, rng);
    const std::size_t mid = (d.d_vision + d.d_text) / 2;
    h.text_to_vision = Mlp::make("hub.text_to_vision", d.d_text, mid, d.d_vision, kMlpInitStd, rng);
    h.vision_to_text = Mlp::make("hub.vision_to_text", d.d_vision, mid, d.d_text, kMlpInitStd, rng);
    return h;
  }

  /// Prompt bootstrap parameters only (used by every prompted mode).
  void for_each_prompt_parameter(const std::function<void(Parameter&)>& fn) {
    fn(prompt_text);
    fn(bootstrap_weight);
    fn(bootstrap_bias);
  }

  void for_each_parameter(const std::function<void(Parameter&)>& fn) {
    for_each_prompt_parameter(fn);
    intra_vision.for_each(fn);
    intra_text.for_each(fn);
    text_to_vision.for_each(fn);
    vision_to_text.for_each(fn);
  }

  Mlp& intra(Modality m) { return m == Modality::Vision ? intra_vision : intra_text; }
  /// Projection from the other modality into `m`.
  Mlp& inter_into(Modality m) { return m == Modality::Vision ? text_to_vision : vision_to_text; }
};

/// p_v = p_t · W + b, row by row.
inline Var bootstrap_vision_prompt(Tape& tape, HubParams& hub, const Var& prompt_text) {
  if (prompt_text.value().rank() != 2 || prompt_text.value().cols() != hub.bootstrap_weight.value.dim(0))
    throw ShapeError("bootstrap_vision_prompt: prompt " + shape_str(prompt_text.shape()) +
                     " does not match weight " + shape_str(hub.bootstrap_weight.value.shape()));
  return add(matmul(prompt_text, tape.leaf(hub.bootstrap_weight)), tape.leaf(hub.bootstrap_bias));
}

/// Test hook: replaces the computed gates with constants.
struct GateOverride {
  std::optional<double> z;
  std::optional<double> r;
};

struct Gates {
  Var z, r;
};

inline Var gate_softmax(const Var& logits, const SimilarityConfig& cfg) {
  Var l = cfg.gate_temperature == 1.0 ? logits : scale(logits, 1.0 / cfg.gate_temperature);
  return softmax(l, cfg.gate_axis == GateAxis::Feature ? 1 : 0);
}

/// z = softmax(ReLU(sim(MLP(p̂), p̂))), r = softmax(ReLU(sim(p̂, p̃))).
inline Gates activation_gates(Tape& tape, const Var& post_prompt, const Var& projected_other, Mlp& intra,
                              const SimilarityConfig& cfg) {
  Var f_intra = relu(similarity(intra.forward(tape, post_prompt), post_prompt, cfg, SimilarityRole::Intra));
  Var f_inter = relu(similarity(post_prompt, projected_other, cfg, SimilarityRole::Inter));
  return {gate_softmax(f_intra, cfg), gate_softmax(f_inter, cfg)};
}

struct HalfStep {
  Var next;       // p_m at the next interaction layer
  Var projected;  // p̃_{m'}
  Gates gates;
};

/// Produces the next prompt of modality `m` from its own post-layer prompt
/// and the other modality's.
inline HalfStep hub_half_step(Tape& tape, Modality m, const Var& own, const Var& other, HubParams& hub,
                              const SimilarityConfig& cfg, const GateOverride& force = {}) {
  HalfStep hs;
  hs.projected = hub.inter_into(m).forward(tape, other);
  hs.gates = activation_gates(tape, own, hs.projected, hub.intra(m), cfg);
  if (force.z) hs.gates.z = Var::constant(Tensor(hs.gates.z.shape(), *force.z));
  if (force.r) hs.gates.r = Var::constant(Tensor(hs.gates.r.shape(), *force.r));
  Var keep = elementwise_mul(own, hs.gates.z);
  Var transfer_gate = elementwise_mul(scale(hs.gates.z, -1.0, 1.0), hs.gates.r);
  Var transfer = elementwise_mul(hs.projected, transfer_gate);
  hs.next = add(keep, transfer);
  return hs;
}

struct HubOutput {
  HalfStep vision, text;
};

inline HubOutput hub_step(Tape& tape, const Var& post_vision, const Var& post_text, HubParams& hub,
                          const SimilarityConfig& cfg, const GateOverride& force = {}) {
  if (post_vision.value().rows() != post_text.value().rows())
    throw ShapeError("hub_step: prompt lengths differ: " + shape_str(post_vision.shape()) + " vs " +
                     shape_str(post_text.shape()));
  return {hub_half_step(tape, Modality::Vision, post_vision, post_text, hub, cfg, force),
          hub_half_step(tape, Modality::Text, post_text, post_vision, hub, cfg, force)};
}

}  // namespace epic
