#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gtdlab/attack.hpp"
#include "gtdlab/csbm.hpp"
#include "gtdlab/error.hpp"
#include "gtdlab/rng.hpp"
#include "support/synth.hpp"

using namespace gtdlab;

namespace {

bool params_equal(const ModelParams& a, const ModelParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t l = 0; l < a.layers.size(); ++l)
    if (a.layers[l].weight.data != b.layers[l].weight.data || a.layers[l].bias != b.layers[l].bias)
      return false;
  return true;
}

Dataset small_csbm(uint64_t seed = 5) {
  CsbmConfig cfg;
  cfg.n = 60;
  cfg.f = 8;
  cfg.avg_degree = 6;
  cfg.phi = 0.3;
  cfg.epsilon = 3.0;
  cfg.seed = seed;
  return gen_csbm(cfg);
}

// brute-force pair counting with half credit for ties
double auroc_oracle(const std::vector<double>& m, const std::vector<double>& n) {
  double wins = 0;
  for (double a : m)
    for (double b : n) {
      if (a > b) wins += 1.0;
      else if (a == b) wins += 0.5;
    }
  return wins / (double(m.size()) * double(n.size()));
}

size_t intersection_size(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out.size();
}

}  // namespace

TEST_CASE("auroc hand-computed examples") {
  std::vector<double> m1 = {0.9, 0.8}, n1 = {0.1, 0.2};
  CHECK(auroc(m1, n1) == 1.0);

  std::vector<double> m2 = {0.6, 0.4}, n2 = {0.5, 0.3};
  CHECK(auroc(m2, n2) == 0.75);

  std::vector<double> m3 = {0.5, 0.5, 0.5}, n3 = {0.5, 0.5};
  CHECK(auroc(m3, n3) == 0.5);

  CHECK_THROWS_AS(auroc({}, n1), Error);
}

TEST_CASE("auroc equals brute-force pair counting on random instances with ties") {
  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    int m_size = 1 + int(rng.uniform_int(20));
    int n_size = 1 + int(rng.uniform_int(20));
    // coarse grid of score values forces plenty of ties
    std::vector<double> m(m_size), n(n_size);
    for (auto& v : m) v = double(rng.uniform_int(8)) / 8.0;
    for (auto& v : n) v = double(rng.uniform_int(8)) / 8.0;
    double fast = auroc(m, n);
    CHECK(fast == auroc_oracle(m, n));
    CHECK(auroc(m, n) + auroc(n, m) == 1.0);
  }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
  Rng rng(405);
  std::vector<double> m(15), n(12);
  for (auto& v : m) v = rng.uniform();
  for (auto& v : n) v = rng.uniform();
  double base = auroc(m, n);
  auto transform = [](std::vector<double> v) {
    for (auto& x : v) x = std::exp(3.0 * x) - 2.0;
    return v;
  };
  CHECK(auroc(transform(m), transform(n)) == base);
}

TEST_CASE("make_shadow_split: hard copies the target, weak minimizes overlap") {
  SplitMask target = split_nodes(40, 0.5, 3);

  ShadowSplit hard = make_shadow_split(target, AttackMode::Hard, 99);
  CHECK(hard.mask.train_ids == target.train_ids);
  CHECK(hard.mask.test_ids == target.test_ids);

  ShadowSplit weak = make_shadow_split(target, AttackMode::Weak, 99);
  CHECK(weak.mask.train_ids.size() == target.train_ids.size());
  CHECK(intersection_size(weak.mask.train_ids, target.train_ids) == 0);

  // 9:1 split forces intersection |train| - |test|
  SplitMask skew = split_nodes(10, 0.9, 3);
  ShadowSplit w9 = make_shadow_split(skew, AttackMode::Weak, 5);
  CHECK(w9.mask.train_ids.size() == 9);
  CHECK(intersection_size(w9.mask.train_ids, skew.train_ids) == 8);
}

TEST_CASE("weak split minimality across ratios") {
  const int n = 200;
  for (double frac : {0.9, 0.75, 0.5, 0.25, 0.1}) {
    SplitMask target = split_nodes(n, frac, 17);
    ShadowSplit weak = make_shadow_split(target, AttackMode::Weak, 23);
    size_t train = target.train_ids.size(), test = target.test_ids.size();
    size_t expect = train > test ? train - test : 0;
    CHECK(weak.mask.train_ids.size() == train);
    CHECK(intersection_size(weak.mask.train_ids, target.train_ids) == expect);
    // partition check
    std::vector<int> all = weak.mask.train_ids;
    all.insert(all.end(), weak.mask.test_ids.begin(), weak.mask.test_ids.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < n; ++i) CHECK(all[i] == i);
  }
}

TEST_CASE("hard shadow with the target's seed reproduces the target bit-for-bit") {
  Dataset ds = small_csbm(41);
  TrainHyper h;
  h.epochs = 20;
  h.seed = 1234;
  RegimeSpec spec;
  spec.regime = Regime::GTD;
  TrainedModel target = train_regime(ModelKind::GCN, ds, h, spec);

  ShadowSplit hard = make_shadow_split(ds.split, AttackMode::Hard, 7);
  TrainedModel shadow = train_shadow(ModelKind::GCN, ds, hard, h, spec);
  CHECK(params_equal(target.params, shadow.params));

  // …so the attack dataset's posteriors equal the target's own posteriors
  AttackDataset ads = build_attack_dataset(shadow.params, ds, hard, false);
  NormAdj adj = normalize_adjacency(ds.graph);
  Matrix own = softmax_rows(forward(target.params, adj, ds.features));
  for (size_t i = 0; i < own.data.size(); ++i)
    CHECK(std::fabs(ads.posteriors.data[i] - own.data[i]) < 1e-6);
}

TEST_CASE("attack dataset bits and sorting") {
  Dataset ds = small_csbm(43);
  TrainHyper h;
  h.epochs = 10;
  h.seed = 9;
  TrainedModel m = train_normal(ModelKind::MLP, ds, h);
  ShadowSplit sh = make_shadow_split(ds.split, AttackMode::Hard, 1);

  AttackDataset plain = build_attack_dataset(m.params, ds, sh, false);
  int64_t bits = 0;
  for (auto b : plain.member) bits += b;
  CHECK(bits == int64_t(sh.mask.train_ids.size()));

  AttackDataset sorted = build_attack_dataset(m.params, ds, sh, true);
  for (int i = 0; i < sorted.posteriors.rows; ++i)
    for (int j = 0; j + 1 < sorted.posteriors.cols; ++j)
      CHECK(sorted.posteriors.at(i, j) >= sorted.posteriors.at(i, j + 1));
}

TEST_CASE("attack training requires both classes") {
  AttackDataset ads;
  ads.posteriors = Matrix(4, 3);
  ads.member = {1, 1, 1, 1};
  TrainHyper h;
  h.epochs = 1;
  CHECK_THROWS_AS(train_attack(ads, h), Error);
}

TEST_CASE("indistinguishable posteriors leave the attack at chance level") {
  AttackDataset ads;
  ads.posteriors = Matrix(40, 3);
  for (int i = 0; i < 40; ++i) {
    ads.posteriors.at(i, 0) = 0.5f;
    ads.posteriors.at(i, 1) = 0.3f;
    ads.posteriors.at(i, 2) = 0.2f;
  }
  ads.member.assign(40, 0);
  for (int i = 0; i < 20; ++i) ads.member[i] = 1;
  TrainHyper h;
  h.epochs = 50;
  h.seed = 3;
  AttackModel am = train_attack(ads, h);

  // identical inputs give identical scores: every pair ties
  NormAdj no_adj;
  no_adj.num_nodes = 40;
  no_adj.row_ptr.assign(41, 0);
  Matrix probs = softmax_rows(forward(am.params, no_adj, ads.posteriors));
  std::vector<double> ms, ns;
  for (int i = 0; i < 40; ++i)
    (ads.member[i] ? ms : ns).push_back(double(probs.at(i, 1)));
  CHECK(auroc(ms, ns) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("perfectly separated posteriors are learned almost perfectly") {
  AttackDataset ads;
  const int n = 60, c = 4;
  ads.posteriors = Matrix(n, c);
  ads.member.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    if (i < n / 2) {  // members: confident one-hot
      ads.member[i] = 1;
      ads.posteriors.at(i, i % c) = 1.0f;
    } else {  // non-members: uniform
      for (int j = 0; j < c; ++j) ads.posteriors.at(i, j) = 1.0f / c;
    }
  }
  TrainHyper h;
  h.epochs = 200;
  h.seed = 5;
  AttackModel am = train_attack(ads, h);
  NormAdj no_adj;
  no_adj.num_nodes = n;
  no_adj.row_ptr.assign(n + 1, 0);
  Matrix probs = softmax_rows(forward(am.params, no_adj, ads.posteriors));
  std::vector<double> ms, ns;
  for (int i = 0; i < n; ++i)
    (ads.member[i] ? ms : ns).push_back(double(probs.at(i, 1)));
  CHECK(auroc(ms, ns) > 0.99);
}

TEST_CASE("score_attack with a zero-weight attack model gives exactly 0.5") {
  Dataset ds = small_csbm(47);
  TrainHyper h;
  h.epochs = 5;
  h.seed = 7;
  TrainedModel target = train_normal(ModelKind::GCN, ds, h);
  AttackModel am;
  am.params = init_params(ModelKind::MLP, {ds.num_classes, 64, 32, 2}, 1);
  for (auto& l : am.params.layers) l.weight.fill(0.0f);
  AttackScore sc = score_attack(am, target.params, ds, std::nullopt, false);
  CHECK(sc.auroc == 0.5);
}

TEST_CASE("lbp with zero scale does not change the attack outcome") {
  Dataset ds = small_csbm(49);
  TrainHyper h;
  h.epochs = 15;
  h.seed = 11;
  RegimeSpec spec;
  TrainedModel target = train_normal(ModelKind::GCN, ds, h);
  ShadowSplit sh = make_shadow_split(ds.split, AttackMode::Hard, 3);
  TrainedModel shadow = train_shadow(ModelKind::GCN, ds, sh, h, spec);
  AttackDataset ads = build_attack_dataset(shadow.params, ds, sh, false);
  AttackModel am = train_attack(ads, h);

  AttackScore plain = score_attack(am, target.params, ds, std::nullopt, false);
  LbpConfig lbp;
  lbp.num_bins = 2;
  lbp.noise_scale = 0.0f;
  AttackScore noisy = score_attack(am, target.params, ds, lbp, false);
  CHECK(plain.auroc == noisy.auroc);
  CHECK(plain.scores == noisy.scores);
}

TEST_CASE("score_attack validates the input dimension") {
  Dataset ds = small_csbm(51);
  TrainHyper h;
  h.epochs = 3;
  TrainedModel target = train_normal(ModelKind::GCN, ds, h);
  AttackModel am;
  am.params = init_params(ModelKind::MLP, {ds.num_classes + 1, 8, 2}, 1);
  CHECK_THROWS_AS(score_attack(am, target.params, ds, std::nullopt, false), Error);
}
