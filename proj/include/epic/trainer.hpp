// SPDX-License-Identifier: Apache-2.0
//
// Training and evaluation of one experiment, plus multi-run orchestration
// (ablations over modes and seeds, sweeps over layer schedules and
// similarity families).

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "epic/autodiff.hpp"
#include "epic/backbone.hpp"
#include "epic/checkpoint.hpp"
#include "epic/config.hpp"
#include "epic/data.hpp"
#include "epic/grad_check.hpp"
#include "epic/model.hpp"
#include "epic/objective.hpp"

namespace epic {

/// Independent sub-seed for one consumer of the master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return seeded_stream(seed, stream)(); }

enum SeedStream : std::uint64_t { kBackboneStream = 1, kDataStream = 2, kModelStream = 3, kShuffleStream = 4 };

class Adam {
 public:
  Adam(std::vector<Parameter*> params, const OptimConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
    for (Parameter* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  /// One update from the accumulated gradients; parameters without a
  /// gradient buffer are treated as having zero gradient.
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = *params_[i];
      if (!p.has_grad()) continue;
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad[k];
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
        p.value[k] -= cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
      }
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  [[nodiscard]] std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<Parameter*> params_;
  OptimConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

struct EfficiencyLedger {
  std::size_t trainable_params = 0;
  std::size_t analytic_trainable_params = 0;
  std::size_t frozen_params = 0;
  std::size_t interaction_layers = 0;
  /// Floats captured for backward by one sample's forward pass.
  std::size_t activation_floats_per_sample = 0;
  /// Peak over training steps of the floats captured across a minibatch.
  std::size_t activation_floats_per_step = 0;
  /// The same architecture with every backbone weight trainable, one sample.
  std::size_t full_finetune_activation_floats_per_sample = 0;
  std::vector<double> epoch_seconds;

  [[nodiscard]] double trainable_ratio() const {
    return frozen_params ? static_cast<double>(trainable_params) / static_cast<double>(frozen_params) : 0.0;
  }

  [[nodiscard]] std::string to_text() const {
    std::ostringstream o;
    o << "trainable_params = " << trainable_params << "\n"
      << "analytic_trainable_params = " << analytic_trainable_params << "\n"
      << "frozen_params = " << frozen_params << "\n"
      << "trainable_over_frozen = " << format_double(trainable_ratio()) << "\n"
      << "interaction_layers = " << interaction_layers << "\n"
      << "shared_across_interaction_layers = true\n"
      << "activation_floats_per_sample = " << activation_floats_per_sample << "\n"
      << "activation_floats_per_step = " << activation_floats_per_step << "\n"
      << "full_finetune_activation_floats_per_sample = " << full_finetune_activation_floats_per_sample << "\n";
    double total = 0.0;
    for (std::size_t e = 0; e < epoch_seconds.size(); ++e) {
      o << "epoch_" << e + 1 << "_seconds = " << format_double(epoch_seconds[e]) << "\n";
      total += epoch_seconds[e];
    }
    o << "train_seconds = " << format_double(total) << "\n";
    return o.str();
  }
};

struct MetricRow {
  std::string run_id, mode, similarity, layers;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::string split, metric;
  double value = 0.0;
};

inline constexpr const char* kMetricsHeader = "run_id,mode,similarity,layers,seed,epoch,split,metric,value";

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows)
    out += r.run_id + "," + r.mode + "," + r.similarity + "," + r.layers + "," + std::to_string(r.seed) + "," +
           std::to_string(r.epoch) + "," + r.split + "," + r.metric + "," + format_double(r.value) + "\n";
  return out;
}

struct TrainOptions {
  /// Discards every gradient before the optimizer step (negative control).
  bool zero_gradients = false;
  /// Measure the full-finetune activation count for the ledger.
  bool measure_full_finetune = true;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunResult {
  ExperimentConfig config;
  std::string run_id;
  std::vector<MetricRow> rows;
  Metrics test;
  Metrics best_val;
  std::size_t best_epoch = 0;
  EfficiencyLedger ledger;
  std::uint64_t checksum_before = 0, checksum_after = 0;
  /// L2 norm of the change in every frozen backbone value.
  double frozen_delta_norm = 0.0;
  std::size_t optimizer_steps = 0;
  Checkpoint checkpoint;
};

inline std::string run_id(const ExperimentConfig& c) {
  std::string id = std::string(mode_name(c.model.mode)) + "_" + family_name(c.model.similarity.family) + "_L" +
                   join_layers(c.model.interaction_layers, '-') + "_s" + std::to_string(c.seed);
  return id;
}

/// Everything one configuration needs: backbone, data, class bank, model and
/// cached frozen prefixes.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    validate(cfg_);
    BackboneConfig bb = cfg_.backbone;
    bb.seed = derive_seed(cfg_.seed, kBackboneStream);
    backbone_ = std::make_unique<FrozenBackbone>(bb);
    SyntheticTaskSpec task = cfg_.task;
    task.seed = derive_seed(cfg_.seed, kDataStream);
    data_ = generate_dataset(task, bb);
    bank_ = ClassTextBank::build(*backbone_, data_.class_sequences);
    model_ = std::make_unique<PromptedModel>(*backbone_, cfg_.model, derive_seed(cfg_.seed, kModelStream));
  }

  [[nodiscard]] const ExperimentConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] FrozenBackbone& backbone() noexcept { return *backbone_; }
  [[nodiscard]] PromptedModel& model() noexcept { return *model_; }
  [[nodiscard]] const Dataset& data() const noexcept { return data_; }
  [[nodiscard]] const ClassTextBank& bank() const noexcept { return bank_; }
  [[nodiscard]] bool multi_label() const noexcept { return cfg_.task.task == TaskKind::Multi; }

  [[nodiscard]] const std::vector<FrozenPrefix>& prefixes(const Split& split) {
    auto& cache = split_cache(split);
    if (cache.empty())
      for (const auto& s : split.samples) cache.push_back(model_->prefix(s));
    return cache;
  }

  /// Class probabilities (1 x K) from a readout.
  Var probabilities(Tape& tape, const Var& readout) {
    Var tau = model_->temperature_var(tape);
    return multi_label() ? predict_multi(readout, bank_, tau) : predict(readout, bank_, tau);
  }

  Var sample_loss(Tape& tape, const FrozenPrefix& prefix, const ImageTextPair& pair) {
    Var probs = probabilities(tape, model_->readout(tape, prefix));
    return multi_label() ? loss_multi(probs, pair.multi_label, cfg_.literal_losses)
                         : loss_uni(probs, pair.label, cfg_.literal_losses);
  }

  /// Mean loss over a whole split, on a non-recording tape.
  double mean_loss(const Split& split) {
    const auto& pre = prefixes(split);
    double total = 0.0;
    for (std::size_t i = 0; i < pre.size(); ++i) {
      Tape tape(false);
      total += sample_loss(tape, pre[i], split.samples[i]).value().item();
    }
    return total / static_cast<double>(pre.size());
  }

  Metrics evaluate(const Split& split) {
    const auto& pre = prefixes(split);
    std::vector<Tensor> probs;
    probs.reserve(pre.size());
    for (const auto& p : pre) {
      Tape tape(false);
      probs.push_back(probabilities(tape, model_->readout(tape, p)).value());
    }
    if (!multi_label()) {
      std::vector<std::size_t> labels;
      for (const auto& s : split.samples) labels.push_back(s.label);
      return accuracy_metrics(probs, labels);
    }
    std::vector<std::vector<std::uint8_t>> predicted, truth;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      predicted.push_back(threshold(probs[i]));
      truth.push_back(split.samples[i].multi_label);
    }
    return f1_metrics(predicted, truth);
  }

  /// Floats saved for backward by one sample when every backbone weight is
  /// trainable and the pass starts at the embeddings.
  std::size_t full_finetune_activation_floats(const ImageTextPair& pair) {
    BackboneConfig bb = backbone_->config();
    FrozenBackbone full(bb);
    full.set_role(Role::Trainable);
    PromptedModel twin(full, cfg_.model, derive_seed(cfg_.seed, kModelStream));
    Tape tape;
    full.bind_tape(&tape);
    Var probs = multi_label() ? predict_multi(twin.readout(tape, twin.embedding_prefix(pair)), bank_,
                                              twin.temperature_var(tape))
                              : predict(twin.readout(tape, twin.embedding_prefix(pair)), bank_,
                                        twin.temperature_var(tape));
    Var loss = multi_label() ? loss_multi(probs, pair.multi_label, cfg_.literal_losses)
                             : loss_uni(probs, pair.label, cfg_.literal_losses);
    full.bind_tape(nullptr);
    (void)loss;
    return tape.saved_activation_floats();
  }

  [[nodiscard]] Checkpoint checkpoint() {
    Checkpoint ck;
    ck.meta["run_id"] = run_id(cfg_);
    ck.meta["backbone_checksum"] = std::to_string(backbone_->checksum());
    ck.meta["config"] = to_text(cfg_);
    model_->for_each_state_parameter([&](Parameter& p) { ck.tensors.push_back({p.name, p.value, p.role}); });
    return ck;
  }

  /// Restores every state parameter by name; the frozen backbone must match.
  void load(const Checkpoint& ck) {
    auto it = ck.meta.find("backbone_checksum");
    if (it != ck.meta.end() && it->second != std::to_string(backbone_->checksum()))
      throw std::runtime_error("checkpoint: frozen backbone checksum differs from this configuration");
    model_->for_each_state_parameter([&](Parameter& p) {
      const CheckpointEntry* e = ck.find(p.name);
      if (!e) throw std::runtime_error("checkpoint: missing tensor '" + p.name + "'");
      if (e->value.shape() != p.value.shape())
        throw std::runtime_error("checkpoint: tensor '" + p.name + "' has shape " + shape_str(e->value.shape()) +
                                 ", expected " + shape_str(p.value.shape()));
      p.value = e->value;
    });
  }

  RunResult train(const TrainOptions& opts = {});

 private:
  std::vector<FrozenPrefix>& split_cache(const Split& split) {
    if (&split == &data_.train) return train_cache_;
    if (&split == &data_.val) return val_cache_;
    if (&split == &data_.test) return test_cache_;
    throw std::invalid_argument("experiment: split does not belong to this dataset");
  }

  ExperimentConfig cfg_;
  std::unique_ptr<FrozenBackbone> backbone_;
  Dataset data_;
  ClassTextBank bank_;
  std::unique_ptr<PromptedModel> model_;
  std::vector<FrozenPrefix> train_cache_, val_cache_, test_cache_;
};

namespace detail {

inline std::vector<double> flatten_frozen(const FrozenBackbone& bb) {
  std::vector<double> out;
  for (const Parameter* p : bb.parameters()) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  return out;
}

}  // namespace detail

inline RunResult Experiment::train(const TrainOptions& opts) {
  RunResult res;
  res.config = cfg_;
  res.run_id = run_id(cfg_);
  res.checksum_before = backbone_->checksum();
  const std::vector<double> frozen_before = detail::flatten_frozen(*backbone_);

  PromptedModel& model = *model_;
  std::vector<Parameter*> trainable = model.trainable_parameters();
  Adam adam(trainable, cfg_.optim);

  EfficiencyLedger& ledger = res.ledger;
  ledger.trainable_params = model.trainable_count();
  ledger.analytic_trainable_params = analytic_trainable_count(backbone_->config(), cfg_.model);
  ledger.frozen_params = backbone_->parameter_count();
  ledger.interaction_layers = model.schedule().interaction_layers().size();
  if (opts.measure_full_finetune) ledger.full_finetune_activation_floats_per_sample =
      full_finetune_activation_floats(data_.train.samples.front());

  auto row = [&](std::size_t epoch, const std::string& split, const std::string& metric, double value) {
    res.rows.push_back({res.run_id, mode_name(cfg_.model.mode), family_name(cfg_.model.similarity.family),
                        join_layers(cfg_.model.interaction_layers, '-'), cfg_.seed, epoch, split, metric, value});
  };
  std::vector<Tensor> best_state;
  auto snapshot = [&] {
    best_state.clear();
    for (Parameter* p : trainable) best_state.push_back(p->value);
  };
  auto log_val = [&](std::size_t epoch) {
    Metrics m = evaluate(data_.val);
    for (const auto& [name, v] : m.entries()) row(epoch, "val", name, v);
    if (epoch == 0 || m.headline() > res.best_val.headline()) {
      res.best_val = m;
      res.best_epoch = epoch;
      snapshot();
    }
  };

  const auto& train_prefixes = prefixes(data_.train);
  row(0, "train", "loss", mean_loss(data_.train));
  log_val(0);

  std::mt19937_64 shuffle_rng = seeded_stream(derive_seed(cfg_.seed, kShuffleStream), 0);
  std::vector<std::size_t> order(train_prefixes.size());
  const std::size_t B = cfg_.optim.batch;
  for (std::size_t epoch = 1; epoch <= cfg_.optim.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t end = std::min(order.size(), start + B);
      const double weight = 1.0 / static_cast<double>(end - start);
      adam.zero_grad();
      std::size_t step_floats = 0;
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t i = order[j];
        Tape tape;
        Var loss;
        try {
          loss = sample_loss(tape, train_prefixes[i], data_.train.samples[i]);
        } catch (const NumericError& e) {
          throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ", sample " +
                                 std::to_string(i) + ": first non-finite value produced by op '" + e.op() + "'");
        }
        epoch_loss += loss.value().item();
        step_floats += tape.saved_activation_floats();
        if (ledger.activation_floats_per_sample == 0) ledger.activation_floats_per_sample = tape.saved_activation_floats();
        if (loss.tracked()) tape.backward(loss, weight);
      }
      ledger.activation_floats_per_step = std::max(ledger.activation_floats_per_step, step_floats);
      for (Parameter* p : trainable) {
        if (opts.zero_gradients) p->zero_grad();
        if (p->has_grad() && !p->grad.all_finite())
          throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                                 ": non-finite gradient for parameter '" + p->name + "'");
      }
      if (!trainable.empty()) adam.step();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ledger.epoch_seconds.push_back(seconds);
    row(epoch, "train", "loss", epoch_loss / static_cast<double>(order.size()));
    log_val(epoch);
  }

  for (std::size_t i = 0; i < trainable.size(); ++i) trainable[i]->value = best_state[i];
  res.test = evaluate(data_.test);
  for (const auto& [name, v] : res.test.entries()) row(res.best_epoch, "test", name, v);
  res.optimizer_steps = adam.steps();
  res.checksum_after = backbone_->checksum();
  const std::vector<double> frozen_after = detail::flatten_frozen(*backbone_);
  double delta = 0.0;
  for (std::size_t i = 0; i < frozen_after.size(); ++i) delta += (frozen_after[i] - frozen_before[i]) * (frozen_after[i] - frozen_before[i]);
  res.frozen_delta_norm = std::sqrt(delta);
  res.checkpoint = checkpoint();
  return res;
}

inline RunResult train(const ExperimentConfig& cfg, const TrainOptions& opts = {}) {
  Experiment ex(cfg);
  return ex.train(opts);
}

/// Finite-difference check of the training loss (mean over the first
/// `samples` training pairs) against every trainable leaf.
inline GradCheckReport grad_check_experiment(const ExperimentConfig& cfg, double h, double tol,
                                             std::size_t samples = 2) {
  Experiment ex(cfg);
  std::vector<Parameter*> leaves = ex.model().trainable_parameters();
  if (leaves.empty()) throw ConfigError("mode", std::string("'") + mode_name(cfg.model.mode) + "' has nothing to train");
  const Split& train = ex.data().train;
  samples = std::min(samples, train.samples.size());
  const auto& pre = ex.prefixes(train);
  auto objective = [&](Tape& tape) {
    Var total = ex.sample_loss(tape, pre[0], train.samples[0]);
    for (std::size_t i = 1; i < samples; ++i) total = add(total, ex.sample_loss(tape, pre[i], train.samples[i]));
    return scale(total, 1.0 / static_cast<double>(samples));
  };
  return grad_check(objective, leaves, h, tol);
}

/// Writes config.txt, checkpoint.bin, metrics.csv and ledger.txt into `dir`.
inline void write_run_artifacts(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + (dir / name).string() + "'");
    out << text;
  };
  write("config.txt", to_text(r.config));
  write("metrics.csv", metrics_csv(r.rows));
  std::string ledger = "run_id = " + r.run_id + "\n" + r.ledger.to_text() + "best_epoch = " +
                       std::to_string(r.best_epoch) + "\nbackbone_checksum_before = " +
                       std::to_string(r.checksum_before) + "\nbackbone_checksum_after = " +
                       std::to_string(r.checksum_after) + "\n";
  write("ledger.txt", ledger);
  write_checkpoint((dir / "checkpoint.bin").string(), r.checkpoint);
}

/// Runs independent configurations on `workers` threads; results keep the
/// input order and do not depend on the worker count.
inline std::vector<RunResult> run_many(const std::vector<ExperimentConfig>& configs, std::size_t workers,
                                       const TrainOptions& opts = {}) {
  std::vector<RunResult> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, configs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        results[i] = train(configs[i], opts);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  std::size_t n = 0;
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

inline double pooled_std(const Summary& a, const Summary& b) { return std::sqrt((a.std * a.std + b.std * b.std) / 2.0); }

struct AblationRow {
  AblationMode mode;
  std::vector<double> values;  // headline test metric per seed
  Summary summary;
};

struct AblationReport {
  std::string metric;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
  std::vector<RunResult> runs;

  [[nodiscard]] const AblationRow* find(AblationMode m) const {
    for (const auto& r : rows)
      if (r.mode == m) return &r;
    return nullptr;
  }
};

inline std::vector<std::uint64_t> seed_list(std::uint64_t base, std::size_t n) {
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = base + i;
  return seeds;
}

inline AblationReport ablate(const ExperimentConfig& base, const std::vector<AblationMode>& modes, std::size_t seeds,
                             const TrainOptions& opts = {}) {
  if (seeds < 1) throw std::invalid_argument("ablate: at least one seed is required");
  AblationReport rep;
  rep.metric = base.task.task == TaskKind::Multi ? "f1_micro" : "accuracy";
  rep.seeds = seed_list(base.seed, seeds);
  std::vector<ExperimentConfig> configs;
  for (AblationMode m : modes)
    for (std::uint64_t s : rep.seeds) {
      ExperimentConfig c = base;
      c.model.mode = m;
      c.seed = s;
      configs.push_back(std::move(c));
    }
  rep.runs = run_many(configs, base.workers, opts);
  for (std::size_t i = 0; i < modes.size(); ++i) {
    AblationRow row{modes[i], {}, {}};
    for (std::size_t k = 0; k < seeds; ++k) row.values.push_back(rep.runs[i * seeds + k].test.headline());
    row.summary = summarize(row.values);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

inline std::string ablation_csv(const AblationReport& rep) {
  std::string out = "mode,seed,metric,value\n";
  for (const auto& row : rep.rows) {
    for (std::size_t k = 0; k < row.values.size(); ++k)
      out += std::string(mode_name(row.mode)) + "," + std::to_string(rep.seeds[k]) + "," + rep.metric + "," +
             format_double(row.values[k]) + "\n";
    out += std::string(mode_name(row.mode)) + ",mean," + rep.metric + "," + format_double(row.summary.mean) + "\n";
    out += std::string(mode_name(row.mode)) + ",std," + rep.metric + "," + format_double(row.summary.std) + "\n";
  }
  return out;
}

inline const char* mode_label(AblationMode m) {
  switch (m) {
    case AblationMode::Baseline: return "Baseline";
    case AblationMode::PTuning: return "P-tuning";
    case AblationMode::LinearInteraction: return "P-tuning + linear interaction";
    case AblationMode::Epic: return "P-tuning + Interaction Hub";
  }
  return "?";
}

/// Markdown table: one row per mode with component check marks and the
/// mean ± std of the headline metric in percent.
inline std::string ablation_markdown(const AblationReport& rep) {
  std::ostringstream o;
  o << "| Setting | Temporal prompts | Prompt interaction | Hub gates | " << rep.metric << " (%) |\n"
    << "|---|:-:|:-:|:-:|--:|\n";
  for (const auto& row : rep.rows) {
    const bool prompts = row.mode != AblationMode::Baseline;
    const bool interaction = row.mode == AblationMode::LinearInteraction || row.mode == AblationMode::Epic;
    const bool hub = row.mode == AblationMode::Epic;
    char cell[64];
    std::snprintf(cell, sizeof cell, "%.2f ± %.2f", 100.0 * row.summary.mean, 100.0 * row.summary.std);
    o << "| " << mode_label(row.mode) << " | " << (prompts ? "✓" : "") << " | " << (interaction ? "✓" : "")
      << " | " << (hub ? "✓" : "") << " | " << cell << " |\n";
  }
  o << "\n" << rep.seeds.size() << " seeds (" << rep.seeds.front() << ".." << rep.seeds.back() << ").\n";
  return o.str();
}

struct SweepCell {
  std::vector<std::size_t> layers;
  std::size_t interval = 1;
  SimilarityFamily family = SimilarityFamily::Cosine;
  std::vector<double> values;
  Summary summary;
};

struct SweepReport {
  std::string metric;
  std::vector<SweepCell> cells;
  std::vector<RunResult> runs;
};

/// EPIC over every (layer set, similarity family) cell, `seeds` runs each.
inline SweepReport sweep(const ExperimentConfig& base, const std::vector<std::vector<std::size_t>>& layer_sets,
                         const std::vector<SimilarityFamily>& families, std::size_t seeds) {
  if (layer_sets.empty() || families.empty()) throw std::invalid_argument("sweep: the grid is empty");
  if (seeds < 1) throw std::invalid_argument("sweep: at least one seed is required");
  SweepReport rep;
  rep.metric = base.task.task == TaskKind::Multi ? "f1_micro" : "accuracy";
  std::vector<ExperimentConfig> configs;
  for (const auto& layers : layer_sets)
    for (SimilarityFamily f : families) {
      SweepCell cell;
      LayerSchedule sched(layers, base.backbone.layers);
      cell.layers = sched.interaction_layers();
      cell.interval = sched.interval();
      cell.family = f;
      rep.cells.push_back(std::move(cell));
      for (std::uint64_t s : seed_list(base.seed, seeds)) {
        ExperimentConfig c = base;
        c.model.mode = AblationMode::Epic;
        c.model.interaction_layers = layers;
        c.model.similarity.family = f;
        c.seed = s;
        validate(c);
        configs.push_back(std::move(c));
      }
    }
  rep.runs = run_many(configs, base.workers, TrainOptions{false, false});
  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    for (std::size_t k = 0; k < seeds; ++k) rep.cells[i].values.push_back(rep.runs[i * seeds + k].test.headline());
    rep.cells[i].summary = summarize(rep.cells[i].values);
  }
  return rep;
}

inline std::string sweep_csv(const SweepReport& rep) {
  std::string out = "layers,interval,similarity,mean,std\n";
  for (const auto& c : rep.cells)
    out += join_layers(c.layers, '-') + "," + std::to_string(c.interval) + "," + family_name(c.family) + "," +
           format_double(c.summary.mean) + "," + format_double(c.summary.std) + "\n";
  return out;
}

}  // namespace epic
