// SPDX-License-Identifier: Apache-2.0
//
// Frozen dual-branch transformer encoder: a vision branch over image patches
// and a text branch over token ids, both pre-LN, built from a seed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epic/autodiff.hpp"
#include "epic/tensor.hpp"

namespace epic {

enum class Modality { Vision, Text };

inline const char* modality_name(Modality m) { return m == Modality::Vision ? "vision" : "text"; }

struct BackboneConfig {
  std::size_t layers = 6;
  std::size_t d_vision = 32;
  std::size_t d_text = 32;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t vocab = 64;
  std::size_t channels = 1;
  std::size_t image_height = 8;
  std::size_t image_width = 8;
  std::size_t patch = 4;
  std::size_t text_length = 8;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t width(Modality m) const { return m == Modality::Vision ? d_vision : d_text; }
  [[nodiscard]] std::size_t vision_tokens() const {
    return (image_height / patch) * (image_width / patch);
  }
  [[nodiscard]] std::size_t patch_dim() const { return channels * patch * patch; }
};

/// One synthetic sample. `label` is the class id for single-label tasks;
/// `multi_label` holds a 0/1 indicator per class for multi-label tasks.
struct ImageTextPair {
  Tensor image;  // channels x height x width
  std::vector<std::size_t> tokens;
  std::size_t label = 0;
  std::vector<std::uint8_t> multi_label;
};

/// Interaction layers are where prompts are concatenated to the features;
/// every other layer is an extraction layer.
class LayerSchedule {
 public:
  LayerSchedule() = default;
  LayerSchedule(std::vector<std::size_t> interaction, std::size_t total) : total_(total) {
    std::sort(interaction.begin(), interaction.end());
    interaction.erase(std::unique(interaction.begin(), interaction.end()), interaction.end());
    for (std::size_t l : interaction)
      if (l >= total)
        throw std::invalid_argument("schedule: interaction layer " + std::to_string(l) +
                                    " out of range for " + std::to_string(total) + " layers");
    layers_ = std::move(interaction);
  }

  [[nodiscard]] const std::vector<std::size_t>& interaction_layers() const noexcept { return layers_; }
  [[nodiscard]] std::size_t total_layers() const noexcept { return total_; }
  [[nodiscard]] bool empty() const noexcept { return layers_.empty(); }
  [[nodiscard]] std::size_t first() const { return layers_.at(0); }
  [[nodiscard]] bool is_interaction(std::size_t l) const {
    return std::binary_search(layers_.begin(), layers_.end(), l);
  }
  /// Spacing between consecutive interaction layers (1 if fewer than two).
  [[nodiscard]] std::size_t interval() const {
    return layers_.size() < 2 ? 1 : layers_[1] - layers_[0];
  }

 private:
  std::vector<std::size_t> layers_;
  std::size_t total_ = 0;
};

struct AttentionHead {
  Parameter wq, bq, wk, bk, wv, bv, wo;
};

struct EncoderLayer {
  Parameter ln1_gain, ln1_bias;
  std::vector<AttentionHead> heads;
  Parameter attn_out_bias;
  Parameter ln2_gain, ln2_bias;
  Parameter mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct EncoderBranch {
  std::size_t width = 0;
  Parameter positions;
  std::vector<EncoderLayer> layers;
  Parameter final_gain, final_bias;
};

class FrozenBackbone {
 public:
  explicit FrozenBackbone(const BackboneConfig& cfg) : cfg_(cfg) {
    validate(cfg);
    std::mt19937_64 rng = seeded_stream(cfg.seed, 0xB0DE);
    const double patch_scale = 1.0 / std::sqrt(static_cast<double>(cfg.patch_dim()));
    patch_weight_ = frozen("vision.patch.weight", gaussian({cfg.patch_dim(), cfg.d_vision}, 0.0, patch_scale, rng));
    patch_bias_ = frozen("vision.patch.bias", Tensor({1, cfg.d_vision}));
    token_table_ = frozen("text.token_table", gaussian({cfg.vocab, cfg.d_text}, 0.0, 1.0, rng));
    vision_ = make_branch("vision", cfg.d_vision, cfg.vision_tokens(), rng);
    text_ = make_branch("text", cfg.d_text, cfg.text_length, rng);
  }

  FrozenBackbone(const FrozenBackbone&) = delete;
  FrozenBackbone& operator=(const FrozenBackbone&) = delete;

  [[nodiscard]] const BackboneConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::size_t width(Modality m) const { return cfg_.width(m); }
  [[nodiscard]] std::size_t layers() const noexcept { return cfg_.layers; }
  [[nodiscard]] std::size_t tokens(Modality m) const {
    return m == Modality::Vision ? cfg_.vision_tokens() : cfg_.text_length;
  }

  /// Patchified image tokens and embedded text tokens, each plus positions.
  [[nodiscard]] std::pair<Tensor, Tensor> embed(const ImageTextPair& pair) const {
    return {embed_image(pair.image), embed_text(pair.tokens)};
  }

  [[nodiscard]] Tensor embed_image(const Tensor& image) const {
    const std::size_t c = cfg_.channels, p = cfg_.patch;
    if (image.rank() != 3 || image.dim(0) != c)
      throw ShapeError("embed: image shape " + shape_str(image.shape()) + " does not have " +
                       std::to_string(c) + " channels");
    const std::size_t h = image.dim(1), w = image.dim(2);
    if (h % p != 0 || w % p != 0)
      throw ShapeError("embed: image extent " + shape_str(image.shape()) +
                       " is not divisible by patch size " + std::to_string(p));
    if (h != cfg_.image_height || w != cfg_.image_width)
      throw ShapeError("embed: image extent " + shape_str(image.shape()) + " differs from configured " +
                       std::to_string(cfg_.image_height) + "x" + std::to_string(cfg_.image_width));
    const std::size_t ph = h / p, pw = w / p;
    Tensor patches({ph * pw, c * p * p});
    for (std::size_t py = 0; py < ph; ++py)
      for (std::size_t px = 0; px < pw; ++px) {
        const std::size_t row = py * pw + px;
        std::size_t col = 0;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x)
              patches(row, col++) = image[(ch * h + py * p + y) * w + px * p + x];
      }
    Var v = matmul(Var::constant(std::move(patches)), Var::view(patch_weight_.value));
    v = add(v, Var::view(patch_bias_.value));
    v = add(v, Var::view(vision_.positions.value));
    return v.value();
  }

  [[nodiscard]] Tensor embed_text(const std::vector<std::size_t>& tokens) const {
    if (tokens.empty()) throw ShapeError("embed: empty token sequence");
    if (tokens.size() != cfg_.text_length)
      throw ShapeError("embed: token sequence of length " + std::to_string(tokens.size()) +
                       " but the text branch expects " + std::to_string(cfg_.text_length));
    const std::size_t d = cfg_.d_text;
    Tensor out({tokens.size(), d});
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] >= cfg_.vocab)
        throw std::out_of_range("embed: token id " + std::to_string(tokens[i]) + " >= vocabulary size " +
                                std::to_string(cfg_.vocab));
      for (std::size_t j = 0; j < d; ++j)
        out(i, j) = token_table_.value(tokens[i], j) + text_.positions.value(i, j);
    }
    return out;
  }

  /// One pre-LN encoder layer over all rows of `input` (prompt rows, if
  /// present, take part in the same joint self-attention).
  [[nodiscard]] Var layer_forward(Modality m, std::size_t l, const Var& input) const {
    const EncoderBranch& br = branch(m);
    if (l >= br.layers.size())
      throw std::out_of_range("layer_forward: layer " + std::to_string(l) + " out of range");
    if (input.value().rank() != 2 || input.value().cols() != br.width)
      throw ShapeError(std::string("layer_forward: input ") + shape_str(input.shape()) + " does not match " +
                       modality_name(m) + " width " + std::to_string(br.width));
    const EncoderLayer& L = br.layers[l];
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(br.width / cfg_.heads));

    Var h = layer_norm(input, view(L.ln1_gain), view(L.ln1_bias));
    Var attn;
    for (const AttentionHead& head : L.heads) {
      Var q = add(matmul(h, view(head.wq)), view(head.bq));
      Var k = add(matmul(h, view(head.wk)), view(head.bk));
      Var v = add(matmul(h, view(head.wv)), view(head.bv));
      Var a = softmax(scale(matmul(q, transpose(k)), inv_sqrt_dh), 1);
      Var o = matmul(matmul(a, v), view(head.wo));
      attn = attn.defined() ? add(attn, o) : o;
    }
    Var x = add(input, add(attn, view(L.attn_out_bias)));
    Var h2 = layer_norm(x, view(L.ln2_gain), view(L.ln2_bias));
    Var mlp = add(matmul(relu(add(matmul(h2, view(L.mlp_w1)), view(L.mlp_b1))), view(L.mlp_w2)), view(L.mlp_b2));
    return add(x, mlp);
  }

  /// Runs layers [from, to) without prompts.
  [[nodiscard]] Var run_layers(Modality m, Var x, std::size_t from, std::size_t to) const {
    for (std::size_t l = from; l < to; ++l) x = layer_forward(m, l, x);
    return x;
  }

  /// Mean over the feature rows followed by the branch's final layer norm.
  [[nodiscard]] Var pooled_output(Modality m, const Var& final_tokens) const {
    const EncoderBranch& br = branch(m);
    return layer_norm(mean(final_tokens, 0), view(br.final_gain), view(br.final_bias));
  }

  /// Full prompt-free encoding of one branch.
  [[nodiscard]] Tensor encode(Modality m, const Tensor& embedded) const {
    return pooled_output(m, run_layers(m, Var::constant(embedded), 0, cfg_.layers)).value();
  }

  [[nodiscard]] std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    visit(*this, [&](const Parameter& p) { out.push_back(&p); });
    return out;
  }

  /// Mutable access for checkpoint loading and test fixtures.
  void for_each_parameter(const std::function<void(Parameter&)>& fn) { visit(*this, fn); }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Parameter* p : parameters()) n += p->value.size();
    return n;
  }

  [[nodiscard]] std::uint64_t checksum() const {
    std::vector<const Tensor*> ts;
    for (const Parameter* p : parameters()) ts.push_back(&p->value);
    return epic::checksum(ts);
  }

  /// Zeroes every attention and MLP weight and bias, leaving only the
  /// residual path.
  void zero_residual_branches() {
    for (EncoderBranch* br : {&vision_, &text_})
      for (EncoderLayer& L : br->layers) {
        for (AttentionHead& hd : L.heads)
          for (Parameter* p : {&hd.wq, &hd.bq, &hd.wk, &hd.bk, &hd.wv, &hd.bv, &hd.wo}) p->value.fill(0.0);
        for (Parameter* p : {&L.attn_out_bias, &L.mlp_w1, &L.mlp_b1, &L.mlp_w2, &L.mlp_b2}) p->value.fill(0.0);
      }
  }

  /// Marks every backbone parameter trainable or frozen. Used only to size a
  /// hypothetical full fine-tuning pass for the activation ledger.
  void set_role(Role r) {
    for_each_parameter([r](Parameter& p) { p.role = r; });
  }

  /// Leaf views honouring each parameter's role on `tape`.
  [[nodiscard]] Var view(const Parameter& p) const {
    if (active_tape_ != nullptr && p.requires_grad()) return active_tape_->leaf(const_cast<Parameter&>(p));
    return Var::view(p.value);
  }

  /// Routes trainable backbone parameters onto `tape` (null to detach).
  void bind_tape(Tape* tape) const { active_tape_ = tape; }

  static void validate(const BackboneConfig& cfg) {
    auto fail = [](const std::string& m) { throw std::invalid_argument("backbone: " + m); };
    if (cfg.layers == 0) fail("layers must be positive");
    if (cfg.heads == 0 || cfg.d_vision % cfg.heads != 0 || cfg.d_text % cfg.heads != 0)
      fail("widths must be divisible by the head count");
    if (cfg.patch == 0 || cfg.image_height % cfg.patch != 0 || cfg.image_width % cfg.patch != 0)
      fail("image extent must be divisible by the patch size");
    if (cfg.vocab == 0 || cfg.text_length == 0 || cfg.channels == 0 || cfg.mlp_ratio == 0)
      fail("vocab, text_length, channels and mlp_ratio must be positive");
  }

 private:
  static Parameter frozen(std::string name, Tensor t) { return Parameter(std::move(name), std::move(t), Role::Frozen); }

  EncoderBranch make_branch(const std::string& prefix, std::size_t d, std::size_t n, std::mt19937_64& rng) {
    EncoderBranch br;
    br.width = d;
    br.positions = frozen(prefix + ".positions", gaussian({n, d}, 0.0, 0.1, rng));
    const std::size_t dh = d / cfg_.heads;
    const std::size_t hidden = d * cfg_.mlp_ratio;
    const double s_in = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string lp = prefix + ".layer" + std::to_string(l);
      EncoderLayer L;
      L.ln1_gain = frozen(lp + ".ln1.gain", Tensor({1, d}, 1.0));
      L.ln1_bias = frozen(lp + ".ln1.bias", Tensor({1, d}));
      for (std::size_t h = 0; h < cfg_.heads; ++h) {
        const std::string hp = lp + ".attn.head" + std::to_string(h);
        AttentionHead hd;
        hd.wq = frozen(hp + ".wq", gaussian({d, dh}, 0.0, s_in, rng));
        hd.bq = frozen(hp + ".bq", Tensor({1, dh}));
        hd.wk = frozen(hp + ".wk", gaussian({d, dh}, 0.0, s_in, rng));
        hd.bk = frozen(hp + ".bk", Tensor({1, dh}));
        hd.wv = frozen(hp + ".wv", gaussian({d, dh}, 0.0, s_in, rng));
        hd.bv = frozen(hp + ".bv", Tensor({1, dh}));
        hd.wo = frozen(hp + ".wo", gaussian({dh, d}, 0.0, s_in, rng));
        L.heads.push_back(std::move(hd));
      }
      L.attn_out_bias = frozen(lp + ".attn.out_bias", Tensor({1, d}));
      L.ln2_gain = frozen(lp + ".ln2.gain", Tensor({1, d}, 1.0));
      L.ln2_bias = frozen(lp + ".ln2.bias", Tensor({1, d}));
      L.mlp_w1 = frozen(lp + ".mlp.w1", gaussian({d, hidden}, 0.0, s_in, rng));
      L.mlp_b1 = frozen(lp + ".mlp.b1", Tensor({1, hidden}));
      L.mlp_w2 = frozen(lp + ".mlp.w2", gaussian({hidden, d}, 0.0, 1.0 / std::sqrt(static_cast<double>(hidden)), rng));
      L.mlp_b2 = frozen(lp + ".mlp.b2", Tensor({1, d}));
      br.layers.push_back(std::move(L));
    }
    br.final_gain = frozen(prefix + ".final_ln.gain", Tensor({1, d}, 1.0));
    br.final_bias = frozen(prefix + ".final_ln.bias", Tensor({1, d}));
    return br;
  }

  [[nodiscard]] const EncoderBranch& branch(Modality m) const { return m == Modality::Vision ? vision_ : text_; }

  // Canonical parameter order: checksums and checkpoints depend on it.
  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    fn(self.patch_weight_);
    fn(self.patch_bias_);
    fn(self.token_table_);
    for (auto* br : {&self.vision_, &self.text_}) {
      fn(br->positions);
      for (auto& L : br->layers) {
        fn(L.ln1_gain);
        fn(L.ln1_bias);
        for (auto& hd : L.heads) {
          fn(hd.wq);
          fn(hd.bq);
          fn(hd.wk);
          fn(hd.bk);
          fn(hd.wv);
          fn(hd.bv);
          fn(hd.wo);
        }
        fn(L.attn_out_bias);
        fn(L.ln2_gain);
        fn(L.ln2_bias);
        fn(L.mlp_w1);
        fn(L.mlp_b1);
        fn(L.mlp_w2);
        fn(L.mlp_b2);
      }
      fn(br->final_gain);
      fn(br->final_bias);
    }
  }

  BackboneConfig cfg_;
  Parameter patch_weight_, patch_bias_, token_table_;
  EncoderBranch vision_, text_;
  mutable Tape* active_tape_ = nullptr;
};

}  // namespace epic
