#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtdlab/defense.hpp"
#include "gtdlab/graph.hpp"
#include "gtdlab/nn.hpp"

namespace gtdlab {

enum class AttackMode { Hard, Weak };

std::string to_string(AttackMode m);
AttackMode attack_mode_from_string(const std::string& s);

/// Hard: shadow trainset equals the target trainset. Weak: shadow trainset of
/// the same size with minimal intersection with the target trainset.
struct ShadowSplit {
  SplitMask mask;
  AttackMode mode = AttackMode::Hard;
};

/// One row per shadow-graph node: the shadow model's posterior and a bit that
/// is 1 iff the node belongs to the shadow trainset.
struct AttackDataset {
  Matrix posteriors;            // n x C
  std::vector<uint8_t> member;  // n
};

struct AttackModel {
  ModelParams params;  // MLP, input C, output 2
  std::vector<std::pair<float, float>> curve;
};

ShadowSplit make_shadow_split(const SplitMask& target, AttackMode mode, uint64_t seed);

/// Trains the shadow model with the same architecture and regime as the
/// target, supervised on the shadow split.
TrainedModel train_shadow(ModelKind kind, const Dataset& ds, const ShadowSplit& shadow,
                          const TrainHyper& h, const RegimeSpec& spec);

AttackDataset build_attack_dataset(const ModelParams& shadow_model, const Dataset& ds,
                                   const ShadowSplit& shadow, bool sort_posteriors);

/// 3-layer MLP on posterior rows with inverse-frequency class weights.
AttackModel train_attack(const AttackDataset& ads, const TrainHyper& h);

struct AttackScore {
  double auroc = 0.0;
  std::vector<float> scores;  // per node, membership-class probability
};

/// Queries the target model (optionally through the binned-Laplace release),
/// scores every node with the attack model, and evaluates AUROC against the
/// target split membership.
AttackScore score_attack(const AttackModel& am, const ModelParams& target, const Dataset& ds,
                         const std::optional<LbpConfig>& lbp, bool sort_posteriors);

/// Mann-Whitney AUROC with half credit for ties, via average rank sums.
double auroc(std::span<const double> member_scores, std::span<const double> nonmember_scores);

}  // namespace gtdlab
