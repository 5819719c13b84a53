// SPDX-License-Identifier: Apache-2.0
//
// epic: train, evaluate, ablate, sweep, gradient-check and count parameters.
//
// Exit codes: 0 success, 1 runtime failure (or failed gradient check),
// 2 invalid configuration.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epic/epic.hpp"

namespace fs = std::filesystem;
using namespace epic;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "config file (key = value)");
  cmd->add_option("--set", c.overrides, "override key=value (repeatable)")->take_all();
  cmd->add_option("--out", c.out, "output directory (overrides output.dir)");
}

ExperimentConfig resolve(const Common& c, bool literal_losses) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (literal_losses) cfg.literal_losses = true;
  validate(cfg);
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<AblationMode> parse_modes(const std::string& list) {
  if (list == "all") return all_modes();
  std::vector<AblationMode> modes;
  for (const auto& m : split(list, ',')) {
    auto mode = parse_mode(m);
    if (!mode) throw ConfigError("--modes", "unknown mode '" + m + "'");
    modes.push_back(*mode);
  }
  if (modes.empty()) throw ConfigError("--modes", "no modes given");
  return modes;
}

void print_metrics(const std::string& label, const Metrics& m) {
  std::printf("%s", label.c_str());
  for (const auto& [name, v] : m.entries()) std::printf(" %s=%.4f", name.c_str(), v);
  std::printf("\n");
}

int cmd_train(const Common& c, bool literal) {
  ExperimentConfig cfg = resolve(c, literal);
  RunResult r = train(cfg);
  const fs::path dir = fs::path(cfg.output_dir) / r.run_id;
  write_run_artifacts(r, dir);
  std::printf("run %s\n", r.run_id.c_str());
  print_metrics("best val (epoch " + std::to_string(r.best_epoch) + "):", r.best_val);
  print_metrics("test:", r.test);
  std::printf("trainable params %zu (analytic %zu), frozen %zu\n", r.ledger.trainable_params,
              r.ledger.analytic_trainable_params, r.ledger.frozen_params);
  std::printf("artifacts in %s\n", dir.string().c_str());
  return 0;
}

int cmd_eval(const Common& c, bool literal, const std::string& checkpoint) {
  ExperimentConfig cfg = resolve(c, literal);
  Experiment ex(cfg);
  ex.load(read_checkpoint(checkpoint));
  const std::string id = run_id(cfg);
  std::vector<MetricRow> rows;
  auto add = [&](const std::string& split, const Metrics& m) {
    for (const auto& [name, v] : m.entries())
      rows.push_back({id, mode_name(cfg.model.mode), family_name(cfg.model.similarity.family),
                      join_layers(cfg.model.interaction_layers, '-'), cfg.seed, 0, split, name, v});
  };
  add("val", ex.evaluate(ex.data().val));
  add("test", ex.evaluate(ex.data().test));
  const std::string csv = metrics_csv(rows);
  if (c.out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_file(fs::path(c.out) / "eval_metrics.csv", csv);
    std::printf("wrote %s\n", (fs::path(c.out) / "eval_metrics.csv").string().c_str());
  }
  return 0;
}

int cmd_ablate(const Common& c, bool literal, const std::string& modes, std::size_t seeds) {
  ExperimentConfig cfg = resolve(c, literal);
  if (seeds < 3) throw ConfigError("--seeds", "ablations need at least 3 seeds");
  AblationReport rep = ablate(cfg, parse_modes(modes), seeds);
  const fs::path dir(cfg.output_dir);
  write_file(dir / "ablation.csv", ablation_csv(rep));
  write_file(dir / "ablation.md", ablation_markdown(rep));
  write_file(dir / "ablation.svg", ablation_svg(rep));
  std::vector<MetricRow> all;
  for (const auto& r : rep.runs) all.insert(all.end(), r.rows.begin(), r.rows.end());
  write_file(dir / "ablation_metrics.csv", metrics_csv(all));
  std::fputs(ablation_markdown(rep).c_str(), stdout);
  std::printf("wrote %s/ablation.{csv,md,svg}\n", dir.string().c_str());
  return 0;
}

int cmd_sweep(const Common& c, bool literal, const std::string& layers, const std::string& sims, std::size_t seeds) {
  ExperimentConfig cfg = resolve(c, literal);
  std::vector<std::vector<std::size_t>> grid;
  for (const auto& set : split(layers, ';')) {
    ExperimentConfig probe = cfg;
    apply_override(probe, "schedule.layers=" + set);
    probe.model.mode = AblationMode::Epic;
    validate(probe);
    grid.push_back(probe.model.interaction_layers);
  }
  std::vector<SimilarityFamily> families;
  for (const auto& s : split(sims, ',')) {
    auto f = parse_family(s);
    if (!f) throw ConfigError("--similarities", "unknown family '" + s + "' (cos, mmd, cov_pearson)");
    families.push_back(*f);
  }
  SweepReport rep = sweep(cfg, grid, families, seeds);
  const fs::path dir(cfg.output_dir);
  write_file(dir / "sweep.csv", sweep_csv(rep));
  write_file(dir / "sweep.svg", sweep_svg(rep));
  std::fputs(sweep_csv(rep).c_str(), stdout);
  std::printf("wrote %s/sweep.{csv,svg}\n", dir.string().c_str());
  return 0;
}

int cmd_grad_check(const Common& c, bool literal, double tol, double h) {
  ExperimentConfig cfg = resolve(c, literal);
  GradCheckReport rep = grad_check_experiment(cfg, h, tol);
  std::printf("coordinates %zu, max relative error %.3e (tol %.1e) at %s[%zu]: analytic %.6e numeric %.6e\n",
              rep.coordinates, rep.max_rel_error, tol, rep.worst_leaf.c_str(), rep.worst_index,
              rep.worst_analytic, rep.worst_numeric);
  if (!rep.failures.empty()) {
    std::printf("%zu coordinates above tol: %zu step-limited, %zu roundoff-limited (noise %.1e), %zu unexplained\n",
                rep.failures.size(), rep.count(FailureCause::StepLimited), rep.count(FailureCause::RoundoffLimited),
                rep.noise_floor, rep.count(FailureCause::Unexplained));
    for (const auto& f : rep.failures)
      if (f.cause == FailureCause::Unexplained)
        std::printf("  unexplained %s[%zu]: analytic %.6e numeric %.6e\n", f.leaf.c_str(), f.index, f.analytic,
                    f.numeric);
  }
  std::printf("%s\n", rep.pass ? "PASS" : "FAIL");
  return rep.pass ? 0 : 1;
}

int cmd_count_params(const Common& c, bool literal) {
  ExperimentConfig cfg = resolve(c, literal);
  BackboneConfig bb = cfg.backbone;
  FrozenBackbone backbone(bb);
  PromptedModel model(backbone, cfg.model, 0);
  const std::size_t runtime = model.trainable_count();
  const std::size_t analytic = analytic_trainable_count(bb, cfg.model);
  const std::size_t frozen = backbone.parameter_count();
  std::printf("mode = %s\n", mode_name(cfg.model.mode));
  std::printf("interaction_layers = %s\n", join_layers(cfg.model.interaction_layers).c_str());
  std::printf("trainable_params = %zu\n", runtime);
  std::printf("analytic_trainable_params = %zu\n", analytic);
  std::printf("frozen_params = %zu\n", frozen);
  std::printf("trainable_over_frozen = %.6f\n", frozen ? static_cast<double>(runtime) / static_cast<double>(frozen) : 0.0);
  std::printf("note: hub parameters are shared by every interaction layer, so the count does not depend on "
              "how many interaction layers are scheduled\n");
  return runtime == analytic ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal prompts with an Interaction Hub on a frozen toy dual-branch transformer"};
  app.require_subcommand(1);
  Common common;
  bool literal = false;
  std::string checkpoint, modes = "all", layers = "2,3,4", sims = "cos,mmd";
  std::size_t seeds = 5, sweep_seeds = 3;
  double tol = 1e-4, h = 1e-5;

  auto* train_cmd = app.add_subcommand("train", "train one configuration and write its run directory");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the validation and test splits");
  auto* ablate_cmd = app.add_subcommand("ablate", "compare ablation modes over several seeds");
  auto* sweep_cmd = app.add_subcommand("sweep", "grid over interaction layer sets and similarity families");
  auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference check of every trainable gradient");
  auto* count_cmd = app.add_subcommand("count-params", "print the parameter ledger without training");
  auto* schema_cmd = app.add_subcommand("schema", "print every config key with its default");
  for (auto* cmd : {train_cmd, eval_cmd, ablate_cmd, sweep_cmd, grad_cmd, count_cmd}) {
    add_common(cmd, common);
    cmd->add_flag("--literal-losses", literal, "use the literal loss forms");
  }
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint archive")->required();
  ablate_cmd->add_option("--modes", modes, "comma list of baseline, ptuning, linear, epic, or 'all'");
  ablate_cmd->add_option("--seeds", seeds, "number of seeds (>= 3)");
  sweep_cmd->add_option("--layers", layers, "layer sets separated by ';', e.g. \"2,3,4;1,3,5\"");
  sweep_cmd->add_option("--similarities", sims, "comma list of cos, mmd, cov_pearson");
  sweep_cmd->add_option("--seeds", sweep_seeds, "seeds per cell");
  grad_cmd->add_option("--tol", tol, "maximum relative error");
  grad_cmd->add_option("--step", h, "finite-difference step");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return cmd_train(common, literal);
    if (*eval_cmd) return cmd_eval(common, literal, checkpoint);
    if (*ablate_cmd) return cmd_ablate(common, literal, modes, seeds);
    if (*sweep_cmd) return cmd_sweep(common, literal, layers, sims, sweep_seeds);
    if (*grad_cmd) return cmd_grad_check(common, literal, tol, h);
    if (*count_cmd) return cmd_count_params(common, literal);
    if (*schema_cmd) {
      std::fputs(describe_schema().c_str(), stdout);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
