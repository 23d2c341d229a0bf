// Batch experiment runner for the transductive membership-inference lab:
// dataset generation, defended training, shadow-model attacks, sweeps.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gtdlab/attack.hpp"
#include "gtdlab/csbm.hpp"
#include "gtdlab/defense.hpp"
#include "gtdlab/error.hpp"
#include "gtdlab/experiment.hpp"
#include "gtdlab/metrics.hpp"

using namespace gtdlab;

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config_missing", "cannot open config file " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config_parse", e.what());
  }
  return j;
}

struct CommonOverrides {
  std::optional<std::string> model, regime, out;
  std::optional<double> split_ratio;
  std::optional<int> repetitions, jobs;
  std::optional<uint64_t> base_seed;
  std::optional<bool> sort_posteriors;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--model", model, "model kind: gcn | sgc | mlp");
    cmd->add_option("--regime", regime,
                    "training regime: normal | flatten | flatten_ga | two_stage_no_flatten | gtd | dmp");
    cmd->add_option("--split-ratio", split_ratio, "train fraction in (0, 1)");
    cmd->add_option("--repetitions", repetitions, "number of repetitions");
    cmd->add_option("--base-seed", base_seed, "base seed for repetition seed derivation");
    cmd->add_option("--jobs", jobs, "concurrent repetitions (default 1: fully sequential)");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--sort-posteriors", sort_posteriors, "sort posterior rows before the attack");
  }

  ExperimentConfig apply(ExperimentConfig cfg) const {
    if (model) cfg.model = model_kind_from_string(*model);
    if (regime) cfg.regime_spec.regime = regime_from_string(*regime);
    if (split_ratio) cfg.split_ratio = *split_ratio;
    if (repetitions) cfg.repetitions = *repetitions;
    if (base_seed) cfg.base_seed = *base_seed;
    if (jobs) cfg.jobs = *jobs;
    if (out) cfg.out_dir = *out;
    if (sort_posteriors) cfg.sort_posteriors = *sort_posteriors;
    return cfg;
  }
};

Dataset materialize_dataset(const ExperimentConfig& cfg, uint64_t seed_r) {
  if (cfg.csbm) {
    CsbmConfig c = *cfg.csbm;
    c.seed = derive_seed(seed_r, std::string_view("csbm"));
    c.train_fraction = cfg.split_ratio;
    return gen_csbm(c);
  }
  Dataset ds = load_dataset(*cfg.dataset_dir);
  ds.split = split_nodes(ds.num_nodes(), cfg.split_ratio, derive_seed(seed_r, std::string_view("split")));
  return ds;
}

int cmd_gen_csbm(const CsbmConfig& cfg, const std::string& out) {
  CsbmParams p = csbm_params(cfg);
  Dataset ds = gen_csbm(cfg);
  save_dataset(ds, out);
  nlohmann::json prov = {{"n", cfg.n},
                         {"avg_degree", cfg.avg_degree},
                         {"f", cfg.f},
                         {"phi", cfg.phi},
                         {"epsilon", cfg.epsilon},
                         {"train_fraction", cfg.train_fraction},
                         {"seed", cfg.seed},
                         {"mu", p.mu},
                         {"lambda", p.lambda}};
  std::ofstream f(std::filesystem::path(out) / "provenance.json");
  f << prov.dump(2) << "\n";
  std::printf("wrote %s: n=%d f=%d mu=%.6f lambda=%.6f edges=%lld\n", out.c_str(), cfg.n, cfg.f,
              p.mu, p.lambda, static_cast<long long>(ds.graph.num_edges));
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, int rep) {
  uint64_t seed_r = repetition_seed(cfg.base_seed, rep);
  Dataset ds = materialize_dataset(cfg, seed_r);
  TrainHyper hyper = cfg.hyper;
  hyper.seed = derive_seed(seed_r, std::string_view("train"));
  RegimeSpec spec = cfg.regime_spec;
  if (spec.regime == Regime::DMP) spec.dmp.seed = derive_seed(seed_r, std::string_view("dmp"));

  TrainedModel model = train_regime(cfg.model, ds, hyper, spec);

  std::filesystem::path dir = next_run_dir(cfg.out_dir);
  save_checkpoint(model.params, hyper.seed, static_cast<int>(model.curve.size()),
                  dir / "checkpoint.bin");
  {
    std::ofstream f(dir / "curve.tsv");
    f << "epoch\ttrain_loss\ttest_loss\n";
    for (size_t e = 0; e < model.curve.size(); ++e)
      f << e << '\t' << model.curve[e].first << '\t' << model.curve[e].second << "\n";
  }
  LossHistogram hist = loss_histogram(model.params, ds, 50);
  {
    std::ofstream f(dir / "histogram.tsv");
    f << "bin_lo\tbin_hi\tmember_count\tnonmember_count\n";
    for (size_t b = 0; b < hist.member_counts.size(); ++b)
      f << hist.edges[b] << '\t' << hist.edges[b + 1] << '\t' << hist.member_counts[b] << '\t'
        << hist.nonmember_counts[b] << "\n";
  }
  double acc = accuracy(model.params, ds, ds.split.test_ids);
  nlohmann::json m = {{"classify_acc", acc},
                      {"final_train_loss", model.curve.back().first},
                      {"final_test_loss", model.curve.back().second},
                      {"histogram_overlap", histogram_overlap(hist)},
                      {"epochs_run", model.curve.size()}};
  if (model.stage_boundary) m["stage_boundary"] = *model.stage_boundary;
  std::ofstream f(dir / "metrics.json");
  f << m.dump(2) << "\n";
  std::printf("%s: acc=%.4f train_loss=%.4f test_loss=%.4f -> %s\n",
              to_string(cfg.regime_spec.regime).c_str(), acc, model.curve.back().first,
              model.curve.back().second, dir.string().c_str());
  return 0;
}

int cmd_attack(const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  cfg.repetitions = 1;
  RunOutput run = run_experiment(cfg);
  for (const auto& rec : run.result.records)
    for (const auto& [mode, auroc] : rec.attack_auroc)
      std::printf("rep %d %s attack auroc=%.4f (acc=%.4f) -> %s\n", rec.repetition, mode.c_str(),
                  auroc, rec.classify_acc, run.run_dir.string().c_str());
  return 0;
}

int cmd_experiment(const ExperimentConfig& cfg) {
  RunOutput run = run_experiment(cfg);
  std::printf("dataset=%s model=%s regime=%s: acc=%.4f +- %.4f", run.result.dataset_id.c_str(),
              run.result.model.c_str(), run.result.regime.c_str(), run.result.classify_acc.mean,
              run.result.classify_acc.stddev);
  for (const auto& [mode, a] : run.result.attack_auroc)
    std::printf(" %s_auroc=%.4f +- %.4f", mode.c_str(), a.mean, a.stddev);
  std::printf(" -> %s\n", run.run_dir.string().c_str());
  int failures = 0;
  for (const auto& rec : run.result.records) failures += rec.failed ? 1 : 0;
  if (failures > 0) std::fprintf(stderr, "%d repetition(s) failed (see results.json)\n", failures);
  return 0;
}

int cmd_sweep(const ExperimentConfig& base, const std::vector<double>& phis,
              const std::vector<double>& ratios) {
  SweepOutput out = run_sweep(base, phis, ratios);
  std::printf("phi  train_frac  hard    weak    hard-weak\n");
  for (const auto& c : out.cells)
    std::printf("%5.2f  %.3f    %.4f  %.4f  %+.4f\n", c.phi, c.ratio, c.hard_auroc, c.weak_auroc,
                c.diff);
  std::printf("-> %s\n", out.dir.string().c_str());
  return 0;
}

int cmd_ablation(const ExperimentConfig& base) {
  const Regime regimes[] = {Regime::Normal, Regime::Flatten, Regime::FlattenGA,
                            Regime::TwoStageNoFlatten, Regime::GTD};
  std::filesystem::path dir = next_run_dir(base.out_dir / "ablation");
  std::ofstream csv(dir / "ablation_summary.csv");
  csv << "regime,classify_acc_mean,classify_acc_std";
  for (auto m : base.attack_modes) csv << ',' << to_string(m) << "_auroc_mean," << to_string(m)
                                       << "_auroc_std";
  csv << "\n";
  for (Regime r : regimes) {
    ExperimentConfig cfg = base;
    cfg.regime_spec.regime = r;
    cfg.out_dir = dir;
    RunOutput run = run_experiment(cfg);
    std::printf("%-22s acc=%.4f", to_string(r).c_str(), run.result.classify_acc.mean);
    csv << to_string(r) << ',' << run.result.classify_acc.mean << ','
        << run.result.classify_acc.stddev;
    for (auto m : base.attack_modes) {
      const auto& a = run.result.attack_auroc.at(to_string(m));
      std::printf(" %s_auroc=%.4f", to_string(m).c_str(), a.mean);
      csv << ',' << a.mean << ',' << a.stddev;
    }
    std::printf("\n");
    csv << "\n";
  }
  std::printf("-> %s\n", dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"membership-inference defense lab for transductive node classification"};
  app.require_subcommand(1);

  // gen-csbm
  auto* gen = app.add_subcommand("gen-csbm", "generate a synthetic two-community dataset");
  CsbmConfig gen_cfg;
  std::string gen_out = "csbm_out";
  gen->add_option("--n", gen_cfg.n, "node count (even)");
  gen->add_option("--avg-degree", gen_cfg.avg_degree, "expected average degree");
  gen->add_option("--f", gen_cfg.f, "feature dimension");
  gen->add_option("--phi", gen_cfg.phi, "homophily parameter in [-1, 1]");
  gen->add_option("--eps", gen_cfg.epsilon, "tolerance epsilon");
  gen->add_option("--seed", gen_cfg.seed, "generator seed");
  gen->add_option("--train-fraction", gen_cfg.train_fraction, "canonical split train fraction");
  gen->add_option("--out", gen_out, "output dataset directory")->required();

  // shared config-driven subcommands
  std::string cfg_path;
  CommonOverrides ov;
  int train_rep = 0;
  std::vector<double> sweep_phis, sweep_ratios;

  auto* train = app.add_subcommand("train", "train one target model under the configured regime");
  train->add_option("--config", cfg_path, "experiment config JSON")->required();
  train->add_option("--rep", train_rep, "repetition index used for seed derivation");
  ov.add_flags(train);

  auto* attack = app.add_subcommand("attack", "single-repetition attack pipeline with score export");
  attack->add_option("--config", cfg_path, "experiment config JSON")->required();
  ov.add_flags(attack);

  auto* experiment = app.add_subcommand("experiment", "run the full repeated pipeline");
  experiment->add_option("--config", cfg_path, "experiment config JSON")->required();
  ov.add_flags(experiment);

  auto* sweep = app.add_subcommand("sweep", "phi x split-ratio sweep on a csbm source");
  sweep->add_option("--config", cfg_path, "experiment config JSON")->required();
  sweep->add_option("--phi", sweep_phis, "phi values")->delimiter(',');
  sweep->add_option("--ratios", sweep_ratios, "train fractions")->delimiter(',');
  ov.add_flags(sweep);

  auto* ablation = app.add_subcommand("ablation", "expand the five-regime ablation from one config");
  ablation->add_option("--config", cfg_path, "experiment config JSON")->required();
  ov.add_flags(ablation);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_csbm(gen_cfg, gen_out);

    ExperimentConfig cfg = ov.apply(parse_experiment_config(load_json(cfg_path)));
    if (train->parsed()) return cmd_train(cfg, train_rep);
    if (attack->parsed()) return cmd_attack(cfg);
    if (experiment->parsed()) return cmd_experiment(cfg);
    if (sweep->parsed()) {
      if (sweep_phis.empty() && cfg.csbm) sweep_phis = {cfg.csbm->phi};
      if (sweep_ratios.empty()) sweep_ratios = {cfg.split_ratio};
      return cmd_sweep(cfg, sweep_phis, sweep_ratios);
    }
    if (ablation->parsed()) return cmd_ablation(cfg);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
