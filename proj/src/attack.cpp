#include "gtdlab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gtdlab/error.hpp"
#include "gtdlab/rng.hpp"

namespace gtdlab {

std::string to_string(AttackMode m) { return m == AttackMode::Hard ? "hard" : "weak"; }

AttackMode attack_mode_from_string(const std::string& s) {
  if (s == "hard") return AttackMode::Hard;
  if (s == "weak") return AttackMode::Weak;
  throw ConfigError("config_attack_mode", "unknown attack mode '" + s + "'");
}

ShadowSplit make_shadow_split(const SplitMask& target, AttackMode mode, uint64_t seed) {
  ShadowSplit s;
  s.mode = mode;
  if (mode == AttackMode::Hard) {
    s.mask = target;
    return s;
  }

  // Weak: same trainset size, minimal intersection with the target trainset.
  // Draw from the target testset first; top up from the trainset only when the
  // testset is too small.
  const size_t want = target.train_ids.size();
  Rng rng(derive_seed(seed, std::string_view("shadow-weak")));
  std::vector<int> pool = target.test_ids;
  rng.shuffle(pool);
  std::vector<int> train;
  if (pool.size() >= want) {
    train.assign(pool.begin(), pool.begin() + want);
  } else {
    train = pool;
    std::vector<int> top_up = target.train_ids;
    rng.shuffle(top_up);
    train.insert(train.end(), top_up.begin(), top_up.begin() + (want - pool.size()));
  }
  std::sort(train.begin(), train.end());

  const int n = static_cast<int>(target.train_ids.size() + target.test_ids.size());
  std::vector<int8_t> in_train(n, 0);
  for (int id : train) in_train[id] = 1;
  std::vector<int> test;
  for (int i = 0; i < n; ++i)
    if (!in_train[i]) test.push_back(i);

  s.mask.train_ids = std::move(train);
  s.mask.test_ids = std::move(test);
  return s;
}

TrainedModel train_shadow(ModelKind kind, const Dataset& ds, const ShadowSplit& shadow,
                          const TrainHyper& h, const RegimeSpec& spec) {
  Dataset view = ds;  // same graph and features; only the split changes
  view.split = shadow.mask;
  if (spec.regime == Regime::DMP) {
    if (shadow.mode == AttackMode::Hard)
      return train_dmp(kind, view, spec.dmp, h);  // reproduces the target's partition
    // weak: mirror the three-phase procedure inside the shadow trainset
    std::vector<int> ids = shadow.mask.train_ids;
    Rng rng(derive_seed(spec.dmp.seed, std::string_view("shadow-dmp")));
    rng.shuffle(ids);
    double pf = spec.dmp.private_fraction /
                (spec.dmp.private_fraction + spec.dmp.reference_fraction);
    size_t n_priv = static_cast<size_t>(std::floor(double(ids.size()) * pf + 0.5));
    n_priv = std::min(std::max<size_t>(n_priv, 1), ids.size() - 1);
    DmpSplit split;
    split.private_ids.assign(ids.begin(), ids.begin() + n_priv);
    split.reference_ids.assign(ids.begin() + n_priv, ids.end());
    split.test_ids = shadow.mask.test_ids;
    std::sort(split.private_ids.begin(), split.private_ids.end());
    std::sort(split.reference_ids.begin(), split.reference_ids.end());
    return train_dmp_on(kind, view, split, spec.dmp.kl_weight, h);
  }
  return train_regime(kind, view, h, spec);
}

namespace {

void sort_rows_descending(Matrix& m) {
  for (int i = 0; i < m.rows; ++i) {
    float* row = m.row(i);
    std::sort(row, row + m.cols, std::greater<float>());
  }
}

}  // namespace

AttackDataset build_attack_dataset(const ModelParams& shadow_model, const Dataset& ds,
                                   const ShadowSplit& shadow, bool sort_posteriors) {
  NormAdj adj = normalize_adjacency(ds.graph);
  AttackDataset out;
  out.posteriors = softmax_rows(forward(shadow_model, adj, ds.features));
  if (sort_posteriors) sort_rows_descending(out.posteriors);
  out.member.assign(ds.num_nodes(), 0);
  for (int id : shadow.mask.train_ids) out.member[id] = 1;
  return out;
}

AttackModel train_attack(const AttackDataset& ads, const TrainHyper& h) {
  const int n = ads.posteriors.rows;
  const int c = ads.posteriors.cols;
  int64_t members = 0;
  for (auto b : ads.member) members += b;
  if (members == 0 || members == n)
    throw Error("attack_single_class", "attack dataset needs both member and non-member rows");

  // inverse-frequency weights, normalized so a balanced set gets weight 1
  const double w1 = double(n) / (2.0 * double(members));
  const double w0 = double(n) / (2.0 * double(n - members));
  std::vector<float> weights(n);
  double weight_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    weights[i] = float(ads.member[i] ? w1 : w0);
    weight_sum += weights[i];
  }

  AttackModel am;
  am.params = init_params(ModelKind::MLP, {c, 64, 32, 2}, derive_seed(h.seed, std::string_view("attack-mlp")));
  AdamState adam = make_adam_state(am.params);

  std::vector<int> all_ids(n);
  std::iota(all_ids.begin(), all_ids.end(), 0);
  NormAdj no_adj;  // MLP ignores adjacency
  no_adj.num_nodes = n;
  no_adj.row_ptr.assign(n + 1, 0);

  Rng drop_rng(derive_seed(h.seed, std::string_view("attack-dropout")));
  for (int epoch = 0; epoch < h.epochs; ++epoch) {
    ForwardTrace trace;
    Matrix logits = forward_traced(am.params, no_adj, ads.posteriors, trace, h.dropout,
                                   h.dropout > 0 ? &drop_rng : nullptr);
    // weighted softmax cross-entropy on the membership bit
    Matrix dlogits(n, 2);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* x = logits.row(i);
      double mx = std::max(double(x[0]), double(x[1]));
      double e0 = std::exp(double(x[0]) - mx), e1 = std::exp(double(x[1]) - mx);
      double z = e0 + e1;
      int y = ads.member[i];
      double q[2] = {e0 / z, e1 / z};
      total += -weights[i] * (double(x[y]) - mx - std::log(z));
      for (int j = 0; j < 2; ++j)
        dlogits.at(i, j) = float(weights[i] * (q[j] - (j == y ? 1.0 : 0.0)) / weight_sum);
    }
    am.curve.emplace_back(float(total / weight_sum), 0.0f);
    ModelGrads grads = backward(am.params, no_adj, ads.posteriors, trace, dlogits);
    adam_step(am.params, grads, adam, h);
  }
  return am;
}

AttackScore score_attack(const AttackModel& am, const ModelParams& target, const Dataset& ds,
                         const std::optional<LbpConfig>& lbp, bool sort_posteriors) {
  if (am.params.in_dim() != ds.num_classes)
    throw Error("dim_mismatch", "attack model input dim does not match dataset classes");
  NormAdj adj = normalize_adjacency(ds.graph);
  Matrix released = softmax_rows(forward(target, adj, ds.features));
  if (lbp) released = lbp_perturb(released, *lbp);
  if (sort_posteriors) sort_rows_descending(released);

  const int n = released.rows;
  NormAdj no_adj;
  no_adj.num_nodes = n;
  no_adj.row_ptr.assign(n + 1, 0);
  Matrix probs = softmax_rows(forward(am.params, no_adj, released));

  AttackScore out;
  out.scores.resize(n);
  for (int i = 0; i < n; ++i) out.scores[i] = probs.at(i, 1);

  std::vector<double> member_scores, nonmember_scores;
  member_scores.reserve(ds.split.train_ids.size());
  nonmember_scores.reserve(ds.split.test_ids.size());
  for (int id : ds.split.train_ids) member_scores.push_back(double(out.scores[id]));
  for (int id : ds.split.test_ids) nonmember_scores.push_back(double(out.scores[id]));
  out.auroc = auroc(member_scores, nonmember_scores);
  return out;
}

double auroc(std::span<const double> member_scores, std::span<const double> nonmember_scores) {
  if (member_scores.empty() || nonmember_scores.empty())
    throw Error("empty_score_set", "auroc needs both member and non-member scores");
  const size_t m = member_scores.size(), k = nonmember_scores.size();
  struct Entry {
    double score;
    bool member;
  };
  std::vector<Entry> all;
  all.reserve(m + k);
  for (double s : member_scores) all.push_back({s, true});
  for (double s : nonmember_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // average ranks over tie groups; rank sum of members gives the U statistic
  double rank_sum_members = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    double avg_rank = 0.5 * (double(i + 1) + double(j));  // 1-based inclusive range
    for (size_t t = i; t < j; ++t)
      if (all[t].member) rank_sum_members += avg_rank;
    i = j;
  }
  double u = rank_sum_members - 0.5 * double(m) * double(m + 1);
  return u / (double(m) * double(k));
}

}  // namespace gtdlab
