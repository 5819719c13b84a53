// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic image-text tasks.
//
// Every class owns an image prototype (a random pixel pattern) and a text
// prototype (a random token motif). Samples perturb both. With probability
// `noise` exactly one modality is corrupted: its prototype is swapped for a
// fresh random distractor that belongs to no class, so that modality carries
// no label information and only the other one can recover the class.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "epic/backbone.hpp"
#include "epic/objective.hpp"
#include "epic/tensor.hpp"

namespace epic {

struct SyntheticTaskSpec {
  TaskKind task = TaskKind::Uni;
  std::size_t classes = 4;
  std::size_t n_train = 384;
  std::size_t n_val = 256;
  std::size_t n_test = 512;
  double noise = 0.3;
  double pixel_noise = 0.5;
  double token_noise = 0.1;
  std::uint64_t seed = 0;

  /// Entailment-style tasks always have three labels.
  [[nodiscard]] std::size_t effective_classes() const { return task == TaskKind::Entailment3 ? 3 : classes; }
};

/// Which modality (if any) was replaced by a distractor, and the prototype
/// index each modality was drawn from (kNone for a distractor).
struct Provenance {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  bool image_corrupted = false;
  bool text_corrupted = false;
  std::size_t image_source = kNone;
  std::size_t text_source = kNone;
};

struct Split {
  std::vector<ImageTextPair> samples;
  std::vector<Provenance> provenance;
};

struct Dataset {
  SyntheticTaskSpec spec;
  std::size_t classes = 0;
  std::vector<Tensor> image_prototypes;
  std::vector<std::vector<std::size_t>> text_prototypes;
  /// Hand-crafted class prompt stand-ins for the classifier bank.
  std::vector<std::vector<std::size_t>> class_sequences;
  Split train, val, test;
};

namespace detail {

class SampleFactory {
 public:
  SampleFactory(const SyntheticTaskSpec& spec, const BackboneConfig& bb, Dataset& ds)
      : spec_(spec), bb_(bb), ds_(ds) {}

  Tensor image_from(const std::vector<std::size_t>& sources, std::mt19937_64& rng) const {
    Tensor img({bb_.channels, bb_.image_height, bb_.image_width});
    for (std::size_t s : sources)
      for (std::size_t i = 0; i < img.size(); ++i) img[i] += ds_.image_prototypes[s][i] / static_cast<double>(sources.size());
    std::normal_distribution<double> noise(0.0, spec_.pixel_noise);
    for (double& v : img.values()) v += noise(rng);
    return img;
  }

  Tensor distractor_image(std::mt19937_64& rng) const {
    Tensor img = gaussian({bb_.channels, bb_.image_height, bb_.image_width}, 0.0, 1.0, rng);
    std::normal_distribution<double> noise(0.0, spec_.pixel_noise);
    for (double& v : img.values()) v += noise(rng);
    return img;
  }

  std::vector<std::size_t> text_from(const std::vector<std::size_t>& sources, std::mt19937_64& rng) const {
    std::vector<std::size_t> tokens(bb_.text_length);
    std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
    std::uniform_int_distribution<std::size_t> vocab(0, bb_.vocab - 1);
    std::bernoulli_distribution flip(spec_.token_noise);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      tokens[i] = ds_.text_prototypes[sources[pick(rng)]][i];
      if (flip(rng)) tokens[i] = vocab(rng);
    }
    return tokens;
  }

  std::vector<std::size_t> distractor_text(std::mt19937_64& rng) const {
    std::vector<std::size_t> tokens(bb_.text_length);
    std::uniform_int_distribution<std::size_t> vocab(0, bb_.vocab - 1);
    for (auto& t : tokens) t = vocab(rng);
    return tokens;
  }

  /// Image and text drawn from the given prototype sets, with optional
  /// single-modality corruption.
  void fill(ImageTextPair& pair, Provenance& prov, const std::vector<std::size_t>& image_src,
            const std::vector<std::size_t>& text_src, std::mt19937_64& rng) const {
    std::bernoulli_distribution corrupt(spec_.noise);
    std::bernoulli_distribution which(0.5);
    const bool corrupted = corrupt(rng);
    const bool hit_image = which(rng);
    prov.image_corrupted = corrupted && hit_image;
    prov.text_corrupted = corrupted && !hit_image;
    pair.image = prov.image_corrupted ? distractor_image(rng) : image_from(image_src, rng);
    pair.tokens = prov.text_corrupted ? distractor_text(rng) : text_from(text_src, rng);
    prov.image_source = prov.image_corrupted ? Provenance::kNone : image_src.front();
    prov.text_source = prov.text_corrupted ? Provenance::kNone : text_src.front();
  }

 private:
  const SyntheticTaskSpec& spec_;
  const BackboneConfig& bb_;
  Dataset& ds_;
};

}  // namespace detail

inline void validate_task(const SyntheticTaskSpec& spec, const BackboneConfig& bb) {
  const std::size_t k = spec.effective_classes();
  if (k < 2) throw std::invalid_argument("task: at least two classes are required");
  if (!(spec.noise >= 0.0 && spec.noise < 0.5)) throw std::invalid_argument("task: noise must lie in [0, 0.5)");
  if (spec.n_train == 0 || spec.n_val == 0 || spec.n_test == 0)
    throw std::invalid_argument("task: every split needs at least one sample");
  const std::size_t pixels = bb.channels * bb.image_height * bb.image_width;
  // Entailment uses four scenes regardless of the label count.
  const std::size_t prototypes = spec.task == TaskKind::Entailment3 ? 4 : k;
  if (prototypes > bb.vocab || prototypes > pixels)
    throw std::invalid_argument("task: " + std::to_string(prototypes) + " prototypes exceed the capacity of vocab " +
                                std::to_string(bb.vocab) + " / " + std::to_string(pixels) + " pixels");
}

/// Entailment labels: 0 entailment (text names the image's scene),
/// 1 neutral (an unrelated scene), 2 contradiction (the paired scene).
inline Dataset generate_dataset(const SyntheticTaskSpec& spec, const BackboneConfig& bb) {
  validate_task(spec, bb);
  Dataset ds;
  ds.spec = spec;
  ds.classes = spec.effective_classes();
  const std::size_t prototypes = spec.task == TaskKind::Entailment3 ? 4 : ds.classes;

  std::mt19937_64 proto_rng = seeded_stream(spec.seed, 0xDA7A);
  std::uniform_int_distribution<std::size_t> vocab(0, bb.vocab - 1);
  for (std::size_t c = 0; c < prototypes; ++c) {
    ds.image_prototypes.push_back(gaussian({bb.channels, bb.image_height, bb.image_width}, 0.0, 1.0, proto_rng));
    std::vector<std::size_t> motif(bb.text_length);
    for (auto& t : motif) t = vocab(proto_rng);
    ds.text_prototypes.push_back(std::move(motif));
  }
  for (std::size_t c = 0; c < ds.classes; ++c) {
    std::vector<std::size_t> seq(bb.text_length);
    for (auto& t : seq) t = vocab(proto_rng);
    ds.class_sequences.push_back(std::move(seq));
  }

  detail::SampleFactory factory(spec, bb, ds);
  auto make_split = [&](std::size_t n, std::uint64_t stream) {
    Split split;
    std::mt19937_64 rng = seeded_stream(spec.seed, stream);
    std::uniform_int_distribution<std::size_t> label_dist(0, ds.classes - 1);
    for (std::size_t i = 0; i < n; ++i) {
      ImageTextPair pair;
      Provenance prov;
      switch (spec.task) {
        case TaskKind::Uni: {
          pair.label = label_dist(rng);
          factory.fill(pair, prov, {pair.label}, {pair.label}, rng);
          break;
        }
        case TaskKind::Multi: {
          std::uniform_int_distribution<std::size_t> count_dist(1, std::min<std::size_t>(3, ds.classes));
          std::vector<std::size_t> all(ds.classes);
          for (std::size_t c = 0; c < ds.classes; ++c) all[c] = c;
          std::shuffle(all.begin(), all.end(), rng);
          all.resize(count_dist(rng));
          std::sort(all.begin(), all.end());
          pair.multi_label.assign(ds.classes, 0);
          for (std::size_t c : all) pair.multi_label[c] = 1;
          pair.label = all.front();
          factory.fill(pair, prov, all, all, rng);
          break;
        }
        case TaskKind::Entailment3: {
          pair.label = label_dist(rng);
          std::uniform_int_distribution<std::size_t> scene_dist(0, 3);
          const std::size_t scene = scene_dist(rng);
          const std::size_t partner = scene ^ 1U;
          std::size_t hypothesis = scene;
          if (pair.label == 2) hypothesis = partner;
          if (pair.label == 1) {
            std::uniform_int_distribution<std::size_t> other(0, 1);
            hypothesis = (scene < 2 ? 2 : 0) + other(rng);
          }
          factory.fill(pair, prov, {scene}, {hypothesis}, rng);
          break;
        }
      }
      split.samples.push_back(std::move(pair));
      split.provenance.push_back(prov);
    }
    return split;
  };
  ds.train = make_split(spec.n_train, 1);
  ds.val = make_split(spec.n_val, 2);
  ds.test = make_split(spec.n_test, 3);
  return ds;
}

}  // namespace epic
