#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtdlab/graph.hpp"
#include "gtdlab/nn.hpp"

namespace gtdlab {

/// Training regimes. The last two are posterior-time / distillation baselines;
/// the middle four form the ablation ladder of the two-stage defense.
enum class Regime { Normal, Flatten, FlattenGA, TwoStageNoFlatten, GTD, DMP };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct TrainedModel {
  ModelParams params;
  Regime regime = Regime::Normal;
  // per-epoch ground-truth mean cross-entropy on the train and test sides
  std::vector<std::pair<float, float>> curve;
  std::optional<int> stage_boundary;
};

/// Binned Laplace posterior perturbation parameters.
struct LbpConfig {
  int num_bins = 2;
  float noise_scale = 1.0f;
  uint64_t seed = 1;
};

/// Teacher/student distillation split and loss mix.
struct DmpConfig {
  double private_fraction = 0.45;
  double reference_fraction = 0.45;
  double test_fraction = 0.1;
  float kl_weight = 0.5f;
  uint64_t seed = 1;
};

/// Soft-label rows: flatten_param beta at the true class, (1-beta)/(C-1) elsewhere.
Matrix make_soft_labels(std::span<const int> labels, int num_classes, float beta);

TrainedModel train_normal(ModelKind kind, const Dataset& ds, const TrainHyper& h);

/// One-stage flattening: epochs whose mean supervised loss is below the
/// threshold step on soft labels instead of hard ones. The threshold test uses
/// the hard-label loss from the current epoch's forward pass, before the step.
TrainedModel train_flatten(ModelKind kind, const Dataset& ds, const TrainHyper& h);

/// Flattening plus periodic gradient ascent: every ascent_period-th
/// sub-threshold epoch steps on the negated hard-label gradient.
TrainedModel train_flatten_ga(ModelKind kind, const Dataset& ds, const TrainHyper& h,
                              int ascent_period);

/// Two-stage training: stage 1 on the trainset, then pseudolabels for the
/// testset are frozen from the stage-1 model and stage 2 resumes from the
/// stage-1 parameters (fresh optimizer state) supervising only the testset.
/// flatten toggles the soft-label rule in both stages.
TrainedModel train_gtd(ModelKind kind, const Dataset& ds, const TrainHyper& h, bool flatten);

/// Per-row binned Laplace perturbation: random class permutation, contiguous
/// near-equal bins, one Laplace(0, b) draw shared inside each bin, positions
/// restored. Output rows are released as-is (no renormalization or clipping).
Matrix lbp_perturb(const Matrix& posteriors, const LbpConfig& cfg);

struct DmpSplit {
  std::vector<int> private_ids;
  std::vector<int> reference_ids;
  std::vector<int> test_ids;
};

/// Deterministic three-way node split by the config fractions.
DmpSplit make_dmp_split(int n, const DmpConfig& cfg);

/// Distillation defense: unprotected teacher trained on the private set, then
/// a protected student trained on the reference set with loss
/// (1-w) * CE(student, y_ref) + w * KL(teacher || student).
TrainedModel train_dmp(ModelKind kind, const Dataset& ds, const DmpConfig& cfg,
                       const TrainHyper& h);

/// train_dmp on an explicit three-way split (used to mirror the defense on
/// shadow splits).
TrainedModel train_dmp_on(ModelKind kind, const Dataset& ds, const DmpSplit& split,
                          float kl_weight, const TrainHyper& h);

/// A regime plus the knobs it needs; enough for an attacker to mirror the
/// target's training exactly.
struct RegimeSpec {
  Regime regime = Regime::Normal;
  int ascent_period = 3;  // FlattenGA only
  DmpConfig dmp;          // DMP only
};

TrainedModel train_regime(ModelKind kind, const Dataset& ds, const TrainHyper& h,
                          const RegimeSpec& spec);

/// Dims for a model on this dataset: [d, hidden..., C]; empty hidden = defaults.
std::vector<int> model_dims(ModelKind kind, const Dataset& ds, std::span<const int> hidden = {});

}  // namespace gtdlab
