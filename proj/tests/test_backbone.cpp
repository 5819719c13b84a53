// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "epic/backbone.hpp"
#include "epic/model.hpp"

using namespace epic;

namespace {

using Mat = std::vector<std::vector<double>>;

// Plain nested-vector reference encoder, written against parameter names only.
class Reference {
 public:
  explicit Reference(const FrozenBackbone& bb) : cfg_(bb.config()) {
    for (const Parameter* p : bb.parameters()) params_[p->name] = p;
  }

  Mat image_tokens(const Tensor& img) const {
    const std::size_t p = cfg_.patch, w = cfg_.image_width, h = cfg_.image_height;
    Mat patches;
    for (std::size_t py = 0; py < h / p; ++py)
      for (std::size_t px = 0; px < w / p; ++px) {
        std::vector<double> row;
        for (std::size_t c = 0; c < cfg_.channels; ++c)
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x) row.push_back(img[(c * h + py * p + y) * w + px * p + x]);
        patches.push_back(row);
      }
    Mat out = matmul(patches, get("vision.patch.weight"));
    add_row(out, get("vision.patch.bias")[0]);
    add_mat(out, get("vision.positions"));
    return out;
  }

  Mat text_tokens(const std::vector<std::size_t>& ids) const {
    Mat table = get("text.token_table"), pos = get("text.positions");
    Mat out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::vector<double> row = table[ids[i]];
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += pos[i][j];
      out.push_back(row);
    }
    return out;
  }

  Mat layer(const std::string& branch, std::size_t l, const Mat& x) const {
    const std::string lp = branch + ".layer" + std::to_string(l);
    const std::size_t d = x[0].size(), dh = d / cfg_.heads;
    Mat h = ln(x, get(lp + ".ln1.gain")[0], get(lp + ".ln1.bias")[0]);
    Mat attn(x.size(), std::vector<double>(d, 0.0));
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
      const std::string hp = lp + ".attn.head" + std::to_string(hd);
      Mat q = matmul(h, get(hp + ".wq")), k = matmul(h, get(hp + ".wk")), v = matmul(h, get(hp + ".wv"));
      add_row(q, get(hp + ".bq")[0]);
      add_row(k, get(hp + ".bk")[0]);
      add_row(v, get(hp + ".bv")[0]);
      Mat ctx(x.size(), std::vector<double>(dh, 0.0));
      for (std::size_t i = 0; i < x.size(); ++i) {
        std::vector<double> s(x.size());
        double mx = -1e300;
        for (std::size_t j = 0; j < x.size(); ++j) {
          s[j] = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s[j] += q[i][c] * k[j][c];
          s[j] /= std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (double& e : s) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j < x.size(); ++j)
          for (std::size_t c = 0; c < dh; ++c) ctx[i][c] += s[j] / z * v[j][c];
      }
      add_mat(attn, matmul(ctx, get(hp + ".wo")));
    }
    add_row(attn, get(lp + ".attn.out_bias")[0]);
    Mat r = x;
    add_mat(r, attn);
    Mat h2 = ln(r, get(lp + ".ln2.gain")[0], get(lp + ".ln2.bias")[0]);
    Mat m1 = matmul(h2, get(lp + ".mlp.w1"));
    add_row(m1, get(lp + ".mlp.b1")[0]);
    for (auto& row : m1)
      for (double& v : row) v = std::max(v, 0.0);
    Mat m2 = matmul(m1, get(lp + ".mlp.w2"));
    add_row(m2, get(lp + ".mlp.b2")[0]);
    add_mat(r, m2);
    return r;
  }

  std::vector<double> pooled(const std::string& branch, const Mat& x) const {
    std::vector<double> m(x[0].size(), 0.0);
    for (const auto& row : x)
      for (std::size_t j = 0; j < row.size(); ++j) m[j] += row[j] / static_cast<double>(x.size());
    return ln({m}, get(branch + ".final_ln.gain")[0], get(branch + ".final_ln.bias")[0])[0];
  }

 private:
  Mat get(const std::string& name) const {
    const Tensor& t = params_.at(name)->value;
    Mat out(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t j = 0; j < t.cols(); ++j) out[i][j] = t(i, j);
    return out;
  }
  static Mat matmul(const Mat& a, const Mat& b) {
    Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t k = 0; k < b.size(); ++k)
        for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
    return out;
  }
  static void add_row(Mat& a, const std::vector<double>& r) {
    for (auto& row : a)
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += r[j];
  }
  static void add_mat(Mat& a, const Mat& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  }
  static Mat ln(const Mat& x, const std::vector<double>& g, const std::vector<double>& b) {
    Mat out = x;
    for (auto& row : out) {
      double m = 0.0, v = 0.0;
      for (double e : row) m += e / static_cast<double>(row.size());
      for (double e : row) v += (e - m) * (e - m) / static_cast<double>(row.size());
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - m) / std::sqrt(v + 1e-5) * g[j] + b[j];
    }
    return out;
  }

  BackboneConfig cfg_;
  std::map<std::string, const Parameter*> params_;
};

ImageTextPair sample_pair(const BackboneConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ImageTextPair p;
  p.image = gaussian({cfg.channels, cfg.image_height, cfg.image_width}, 0.0, 1.0, rng);
  for (std::size_t i = 0; i < cfg.text_length; ++i) p.tokens.push_back(rng() % cfg.vocab);
  return p;
}

Tensor to_tensor(const Mat& m) {
  Tensor t({m.size(), m[0].size()});
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) t(i, j) = m[i][j];
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(Backbone, EmbeddingsMatchReference) {
  FrozenBackbone bb(BackboneConfig{});
  Reference ref(bb);
  ImageTextPair p = sample_pair(bb.config(), 1);
  auto [v, t] = bb.embed(p);
  EXPECT_LT(max_abs_diff(v, to_tensor(ref.image_tokens(p.image))), 1e-12);
  EXPECT_LT(max_abs_diff(t, to_tensor(ref.text_tokens(p.tokens))), 1e-12);
}

TEST(Backbone, FullForwardMatchesReferenceForBothBranches) {
  BackboneConfig cfg;
  cfg.seed = 7;
  FrozenBackbone bb(cfg);
  Reference ref(bb);
  ImageTextPair p = sample_pair(cfg, 2);
  Mat xv = ref.image_tokens(p.image), xt = ref.text_tokens(p.tokens);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    xv = ref.layer("vision", l, xv);
    xt = ref.layer("text", l, xt);
  }
  auto [v, t] = bb.embed(p);
  Tensor ov = bb.encode(Modality::Vision, v), ot = bb.encode(Modality::Text, t);
  EXPECT_LT(max_abs_diff(ov, to_tensor({ref.pooled("vision", xv)})), 1e-10);
  EXPECT_LT(max_abs_diff(ot, to_tensor({ref.pooled("text", xt)})), 1e-10);
}

TEST(Backbone, PromptRowsJoinSelfAttention) {
  // 4 image patches plus 3 prompt rows: the layer keeps 7 rows, and each
  // matches the reference run on the same 7-row input.
  FrozenBackbone bb(BackboneConfig{});
  Reference ref(bb);
  ImageTextPair p = sample_pair(bb.config(), 3);
  std::mt19937_64 rng(4);
  Tensor prompts = gaussian({3, 32}, 0.0, 0.5, rng);
  Var in = concat_rows({Var::constant(prompts), Var::constant(bb.embed(p).first)});
  Tensor out = bb.layer_forward(Modality::Vision, 2, in).value();
  ASSERT_EQ(out.rows(), 7u);
  Mat rin;
  for (std::size_t i = 0; i < 7; ++i) {
    std::vector<double> row;
    for (std::size_t j = 0; j < 32; ++j) row.push_back(in.value()(i, j));
    rin.push_back(row);
  }
  EXPECT_LT(max_abs_diff(out, to_tensor(ref.layer("vision", 2, rin))), 1e-12);
}

TEST(Backbone, ZeroedResidualBranchesAreIdentity) {
  FrozenBackbone bb(BackboneConfig{});
  bb.zero_residual_branches();
  std::mt19937_64 rng(5);
  Tensor x = gaussian({7, 32}, 0.0, 1.0, rng);
  for (Modality m : {Modality::Vision, Modality::Text})
    EXPECT_EQ(bb.run_layers(m, Var::constant(x), 0, 6).value(), x);
}

TEST(Backbone, SameSeedSameWeightsDifferentSeedDifferentWeights) {
  BackboneConfig a, b, c;
  c.seed = 1;
  FrozenBackbone ba(a), bbk(b), bc(c);
  EXPECT_EQ(ba.checksum(), bbk.checksum());
  EXPECT_NE(ba.checksum(), bc.checksum());
  for (const Parameter* p : ba.parameters()) EXPECT_FALSE(p->requires_grad()) << p->name;
}

TEST(Backbone, EmbedRejectsBadInputs) {
  BackboneConfig cfg;
  FrozenBackbone bb(cfg);
  ImageTextPair p = sample_pair(cfg, 6);
  EXPECT_THROW((void)bb.embed_image(Tensor({2, 8, 8})), ShapeError);
  EXPECT_THROW((void)bb.embed_image(Tensor({1, 6, 8})), ShapeError);
  EXPECT_THROW((void)bb.embed_image(Tensor({1, 12, 12})), ShapeError);
  EXPECT_THROW((void)bb.embed_text({}), ShapeError);
  EXPECT_THROW((void)bb.embed_text({1, 2, 3}), ShapeError);
  p.tokens[0] = cfg.vocab;
  EXPECT_THROW((void)bb.embed(p), std::out_of_range);
}

TEST(Backbone, LayerForwardRejectsWidthMismatch) {
  FrozenBackbone bb(BackboneConfig{});
  EXPECT_THROW((void)bb.layer_forward(Modality::Vision, 0, Var::constant(Tensor({4, 16}))), ShapeError);
  EXPECT_THROW((void)bb.layer_forward(Modality::Vision, 6, Var::constant(Tensor({4, 32}))), std::out_of_range);
}

TEST(Backbone, InvalidConfigurationsThrow) {
  BackboneConfig cfg;
  cfg.heads = 5;
  EXPECT_THROW(FrozenBackbone{cfg}, std::invalid_argument);
  cfg = {};
  cfg.patch = 3;
  EXPECT_THROW(FrozenBackbone{cfg}, std::invalid_argument);
}

TEST(Schedule, SortsDeduplicatesAndChecksRange) {
  LayerSchedule s({4, 2, 2, 3}, 6);
  EXPECT_EQ(s.interaction_layers(), (std::vector<std::size_t>{2, 3, 4}));
  EXPECT_EQ(s.first(), 2u);
  EXPECT_EQ(s.interval(), 1u);
  EXPECT_TRUE(s.is_interaction(3));
  EXPECT_FALSE(s.is_interaction(5));
  EXPECT_EQ(LayerSchedule({1, 3, 5}, 6).interval(), 2u);
  EXPECT_THROW(LayerSchedule({6}, 6), std::invalid_argument);
}

TEST(Backbone, FrozenPrefixIsSharedByBaselineAndPromptedModes) {
  // Below the first interaction layer the prompted modes see exactly the
  // features of the prompt-free encoder.
  FrozenBackbone bb(BackboneConfig{});
  ImageTextPair p = sample_pair(bb.config(), 8);
  ModelConfig base, epic;
  base.mode = AblationMode::Baseline;
  PromptedModel mb(bb, base, 0), me(bb, epic, 0);
  ForwardTrace tb, te;
  {
    Tape t(false);
    (void)mb.readout(t, mb.embedding_prefix(p), {}, &tb);
  }
  {
    Tape t(false);
    (void)me.readout(t, me.embedding_prefix(p), {}, &te);
  }
  ASSERT_EQ(tb.vision_features.size(), 6u);
  ASSERT_EQ(te.vision_features.size(), 6u);
  for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(tb.vision_features[l], te.vision_features[l]) << "layer " << l;
  EXPECT_NE(tb.vision_features[2], te.vision_features[2]);

  FrozenPrefix cached = me.prefix(p);
  EXPECT_EQ(cached.start, 2u);
  EXPECT_EQ(cached.vision, tb.vision_features[1]);
}

TEST(Backbone, GoldenReadout) {
  // Pinned output of seed 0 on a fixed input; catches accidental changes to
  // initialisation order or layer arithmetic.
  FrozenBackbone bb(BackboneConfig{});
  ImageTextPair p;
  p.image = Tensor({1, 8, 8});
  for (std::size_t i = 0; i < 64; ++i) p.image[i] = std::sin(0.1 * static_cast<double>(i));
  for (std::size_t i = 0; i < 8; ++i) p.tokens.push_back((5 * i + 3) % 64);
  Tensor out = bb.encode(Modality::Vision, bb.embed(p).first);
  Reference ref(bb);
  Mat x = ref.image_tokens(p.image);
  for (std::size_t l = 0; l < 6; ++l) x = ref.layer("vision", l, x);
  EXPECT_LT(max_abs_diff(out, to_tensor({ref.pooled("vision", x)})), 1e-10);
  const double golden[] = {-0.581813619502, 0.094510731088, 0.695139397472, -1.658934755556};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], golden[i], 1e-9) << i;
}
