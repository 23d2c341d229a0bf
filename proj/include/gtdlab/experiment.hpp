#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtdlab/attack.hpp"
#include "gtdlab/csbm.hpp"
#include "gtdlab/defense.hpp"
#include "gtdlab/metrics.hpp"

namespace gtdlab {

/// One batch experiment: dataset source, model, regime and its knobs, attack
/// modes, split ratio, repetitions, base seed, output directory.
struct ExperimentConfig {
  std::optional<std::filesystem::path> dataset_dir;
  std::optional<CsbmConfig> csbm;
  std::string dataset_id;  // derived from the source when empty

  ModelKind model = ModelKind::GCN;
  RegimeSpec regime_spec;
  std::optional<LbpConfig> lbp;
  TrainHyper hyper;
  std::vector<AttackMode> attack_modes = {AttackMode::Hard};
  double split_ratio = 0.5;  // train fraction
  bool sort_posteriors = false;
  int repetitions = 5;
  uint64_t base_seed = 1;
  std::filesystem::path out_dir = "runs";
  int jobs = 1;
  bool write_scores = true;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

/// Per-repetition seed: FNV-1a over (base_seed, repetition).
uint64_t repetition_seed(uint64_t base_seed, int repetition);

/// Next free numbered run directory under out (run-0001, run-0002, ...);
/// reruns never overwrite earlier output.
std::filesystem::path next_run_dir(const std::filesystem::path& out);

struct RunOutput {
  ExperimentResult result;
  std::filesystem::path run_dir;
};

/// Full pipeline per repetition: (re)generate or re-split the dataset, train
/// the target under the regime, mirror it on a shadow split per attack mode,
/// train the attack model, score, and persist results.json + summary.csv.
RunOutput run_experiment(const ExperimentConfig& cfg);

struct SweepCell {
  double phi = 0.0;
  double ratio = 0.0;
  double hard_auroc = 0.0;
  double weak_auroc = 0.0;
  double diff = 0.0;  // hard - weak
};

struct SweepOutput {
  std::vector<SweepCell> cells;
  std::filesystem::path dir;
};

/// Cross product of phi values and train fractions on a cSBM source; emits the
/// hard-weak AUROC difference table.
SweepOutput run_sweep(const ExperimentConfig& base, std::span<const double> phis,
                      std::span<const double> ratios);

}  // namespace gtdlab
