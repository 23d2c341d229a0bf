#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "gtdlab/csbm.hpp"
#include "gtdlab/defense.hpp"
#include "gtdlab/error.hpp"
#include "gtdlab/metrics.hpp"
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

TrainHyper quick_hyper(int epochs = 30) {
  TrainHyper h;
  h.epochs = epochs;
  h.seed = 77;
  return h;
}

Matrix random_posteriors(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double sum = 0;
    for (int j = 0; j < cols; ++j) {
      m.at(i, j) = float(rng.uniform() + 0.01);
      sum += m.at(i, j);
    }
    for (int j = 0; j < cols; ++j) m.at(i, j) = float(m.at(i, j) / sum);
  }
  return m;
}

}  // namespace

TEST_CASE("make_soft_labels direct formula") {
  std::vector<int> labels = {3};
  Matrix s = make_soft_labels(labels, 7, 0.7f);
  for (int j = 0; j < 7; ++j)
    CHECK(s.at(0, j) == doctest::Approx(j == 3 ? 0.7 : 0.05).epsilon(1e-6));
  double sum = 0;
  for (int j = 0; j < 7; ++j) sum += s.at(0, j);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

  // beta = 1 degenerates to one-hot
  Matrix h = make_soft_labels(labels, 7, 1.0f);
  for (int j = 0; j < 7; ++j) CHECK(h.at(0, j) == (j == 3 ? 1.0f : 0.0f));

  std::vector<int> l2 = {0, 1};
  Matrix b = make_soft_labels(l2, 2, 0.6f);
  CHECK(b.at(0, 0) == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(b.at(0, 1) == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(b.at(1, 0) == doctest::Approx(0.4).epsilon(1e-6));

  CHECK_THROWS_AS(make_soft_labels(labels, 1, 0.9f), Error);
  CHECK_THROWS_AS(make_soft_labels(l2, 2, 0.4f), Error);  // beta <= 1/C
}

TEST_CASE("train_normal fits a linearly separable toy") {
  Dataset ds = synth::toy_separable();
  TrainHyper h = quick_hyper(200);
  TrainedModel m = train_normal(ModelKind::GCN, ds, h);
  CHECK(m.curve.size() == 200);
  CHECK(!m.stage_boundary.has_value());
  CHECK(accuracy(m.params, ds, ds.split.train_ids) == doctest::Approx(1.0));
}

TEST_CASE("train_normal with one epoch applies exactly one optimizer step") {
  Dataset ds = small_csbm();
  TrainHyper h = quick_hyper(1);
  TrainedModel m = train_normal(ModelKind::GCN, ds, h);

  // manual replication of a single step
  NormAdj adj = normalize_adjacency(ds.graph);
  ModelParams p = init_params(ModelKind::GCN, model_dims(ModelKind::GCN, ds), h.seed);
  AdamState st = make_adam_state(p);
  ForwardTrace trace;
  Matrix logits = forward_traced(p, adj, ds.features, trace);
  auto lr = softmax_xent(logits, ds.labels, ds.split.train_ids);
  ModelGrads g = backward(p, adj, ds.features, trace, lr.dlogits);
  adam_step(p, g, st, h);
  CHECK(params_equal(m.params, p));
}

TEST_CASE("flatten with a never-binding threshold is bit-identical to normal training") {
  Dataset ds = small_csbm();
  TrainHyper h = quick_hyper(25);
  h.loss_threshold = 0.0f;  // supervised loss never drops below zero
  TrainedModel flat = train_flatten(ModelKind::GCN, ds, h);
  TrainedModel norm = train_normal(ModelKind::GCN, ds, h);
  CHECK(params_equal(flat.params, norm.params));
  CHECK(flat.curve == norm.curve);
}

TEST_CASE("always-on flattening floors the loss") {
  Dataset ds = synth::toy_separable();
  TrainHyper h = quick_hyper(300);
  h.loss_threshold = 100.0f;  // every epoch takes the soft-label branch
  h.flatten_param = 0.7f;
  TrainedModel flat = train_flatten(ModelKind::GCN, ds, h);
  TrainedModel norm = train_normal(ModelKind::GCN, ds, h);

  // normal training collapses the train loss; flattening cannot go below the
  // hard loss of the soft optimum, -ln(beta)
  CHECK(norm.curve.back().first < 0.05f);
  CHECK(flat.curve.back().first > 0.2f);

  // the flattened objective itself is floored by the soft-target entropy
  NormAdj adj = normalize_adjacency(ds.graph);
  Matrix logits = forward(flat.params, adj, ds.features);
  std::vector<int> train_labels;
  for (int id : ds.split.train_ids) train_labels.push_back(ds.labels[id]);
  Matrix soft = make_soft_labels(train_labels, ds.num_classes, h.flatten_param);
  auto soft_loss = softmax_xent_soft(logits, soft, ds.split.train_ids);
  double beta = h.flatten_param;
  double entropy_floor = -beta * std::log(beta) - (1 - beta) * std::log((1 - beta) / (ds.num_classes - 1));
  CHECK(soft_loss.mean_loss >= entropy_floor - 1e-6);
}

TEST_CASE("gradient ascent variant: never-binding threshold reduces to normal") {
  Dataset ds = small_csbm();
  TrainHyper h = quick_hyper(25);
  h.loss_threshold = 0.0f;
  TrainedModel ga = train_flatten_ga(ModelKind::GCN, ds, h, 3);
  TrainedModel norm = train_normal(ModelKind::GCN, ds, h);
  CHECK(params_equal(ga.params, norm.params));
  CHECK_THROWS_AS(train_flatten_ga(ModelKind::GCN, ds, h, 1), ConfigError);
}

TEST_CASE("a single ascent step strictly increases the train loss") {
  Dataset ds = synth::toy_separable();
  TrainHyper h = quick_hyper(300);
  TrainedModel m = train_normal(ModelKind::GCN, ds, h);  // near an optimum

  NormAdj adj = normalize_adjacency(ds.graph);
  ForwardTrace trace;
  Matrix logits = forward_traced(m.params, adj, ds.features, trace);
  auto before = softmax_xent(logits, ds.labels, ds.split.train_ids);
  Matrix neg = before.dlogits;
  for (auto& v : neg.data) v = -v;
  ModelGrads g = backward(m.params, adj, ds.features, trace, neg);
  ModelParams p = m.params;
  AdamState st = make_adam_state(p);
  adam_step(p, g, st, h);
  auto after = softmax_xent(forward(p, adj, ds.features), ds.labels, ds.split.train_ids);
  CHECK(after.mean_loss > before.mean_loss);
}

TEST_CASE("two-stage with E=1 runs exactly two steps and freezes pseudolabels") {
  Dataset ds = small_csbm();
  TrainHyper h = quick_hyper(1);
  TrainedModel m = train_gtd(ModelKind::GCN, ds, h, false);
  CHECK(m.curve.size() == 2);
  REQUIRE(m.stage_boundary.has_value());
  CHECK(*m.stage_boundary == 1);
  CHECK(m.regime == Regime::TwoStageNoFlatten);

  // manual replication, pseudolabels computed once at the boundary
  NormAdj adj = normalize_adjacency(ds.graph);
  ModelParams p = init_params(ModelKind::GCN, model_dims(ModelKind::GCN, ds), h.seed);
  {
    AdamState st = make_adam_state(p);
    ForwardTrace trace;
    Matrix logits = forward_traced(p, adj, ds.features, trace);
    auto lr = softmax_xent(logits, ds.labels, ds.split.train_ids);
    adam_step(p, backward(p, adj, ds.features, trace, lr.dlogits), st, h);
  }
  std::vector<int> pseudo;
  {
    Matrix logits = forward(p, adj, ds.features);
    for (int id : ds.split.test_ids) {
      const float* row = logits.row(id);
      int best = 0;
      for (int c = 1; c < logits.cols; ++c)
        if (row[c] > row[best]) best = c;
      pseudo.push_back(best);
    }
  }
  {
    AdamState st = make_adam_state(p);  // fresh state
    ForwardTrace trace;
    Matrix logits = forward_traced(p, adj, ds.features, trace);
    Matrix targets(int(pseudo.size()), ds.num_classes);
    for (size_t i = 0; i < pseudo.size(); ++i) targets.at(int(i), pseudo[i]) = 1.0f;
    auto lr = softmax_xent_soft(logits, targets, ds.split.test_ids);
    adam_step(p, backward(p, adj, ds.features, trace, lr.dlogits), st, h);
  }
  CHECK(params_equal(m.params, p));
}

TEST_CASE("multi-epoch two-stage matches a frozen-pseudolabel replication") {
  Dataset ds = small_csbm(9);
  TrainHyper h = quick_hyper(4);
  TrainedModel m = train_gtd(ModelKind::MLP, ds, h, false);
  CHECK(m.curve.size() == 8);

  NormAdj adj = normalize_adjacency(ds.graph);
  ModelParams p = init_params(ModelKind::MLP, model_dims(ModelKind::MLP, ds), h.seed);
  {
    AdamState st = make_adam_state(p);
    for (int e = 0; e < 4; ++e) {
      ForwardTrace trace;
      Matrix logits = forward_traced(p, adj, ds.features, trace);
      auto lr = softmax_xent(logits, ds.labels, ds.split.train_ids);
      adam_step(p, backward(p, adj, ds.features, trace, lr.dlogits), st, h);
    }
  }
  std::vector<int> pseudo;
  {
    Matrix logits = forward(p, adj, ds.features);
    for (int id : ds.split.test_ids) {
      const float* row = logits.row(id);
      int best = 0;
      for (int c = 1; c < logits.cols; ++c)
        if (row[c] > row[best]) best = c;
      pseudo.push_back(best);
    }
  }
  {
    AdamState st = make_adam_state(p);
    Matrix targets(int(pseudo.size()), ds.num_classes);
    for (size_t i = 0; i < pseudo.size(); ++i) targets.at(int(i), pseudo[i]) = 1.0f;
    for (int e = 0; e < 4; ++e) {
      ForwardTrace trace;
      Matrix logits = forward_traced(p, adj, ds.features, trace);
      auto lr = softmax_xent_soft(logits, targets, ds.split.test_ids);
      adam_step(p, backward(p, adj, ds.features, trace, lr.dlogits), st, h);
    }
  }
  CHECK(params_equal(m.params, p));
}

TEST_CASE("flatten flag only matters when the threshold binds") {
  Dataset ds = small_csbm();
  TrainHyper h = quick_hyper(25);

  h.loss_threshold = 0.0f;  // never binds: both variants identical
  TrainedModel off = train_gtd(ModelKind::GCN, ds, h, false);
  TrainedModel on = train_gtd(ModelKind::GCN, ds, h, true);
  CHECK(params_equal(off.params, on.params));
  CHECK(on.regime == Regime::GTD);

  h.loss_threshold = 100.0f;  // always binds: they diverge
  TrainedModel off2 = train_gtd(ModelKind::GCN, ds, h, false);
  TrainedModel on2 = train_gtd(ModelKind::GCN, ds, h, true);
  CHECK(!params_equal(off2.params, on2.params));
}

TEST_CASE("pseudolabels equal to ground truth keep a separable toy at full accuracy") {
  Dataset ds = synth::toy_separable();
  TrainHyper h = quick_hyper(300);
  TrainedModel stage1 = train_normal(ModelKind::GCN, ds, h);
  REQUIRE(accuracy(stage1.params, ds, ds.split.test_ids) == doctest::Approx(1.0));
  TrainedModel gtd = train_gtd(ModelKind::GCN, ds, h, false);
  CHECK(accuracy(gtd.params, ds, ds.split.test_ids) == doctest::Approx(1.0));
}

TEST_CASE("lbp: zero noise is a bit-exact identity") {
  Matrix post = random_posteriors(50, 7, 3);
  LbpConfig cfg;
  cfg.num_bins = 3;
  cfg.noise_scale = 0.0f;
  cfg.seed = 5;
  Matrix out = lbp_perturb(post, cfg);
  CHECK(std::memcmp(out.data.data(), post.data.data(), post.size() * sizeof(float)) == 0);
}

TEST_CASE("lbp: one bin shifts a row by a common constant and keeps the argmax") {
  Matrix post = random_posteriors(200, 5, 7);
  LbpConfig cfg;
  cfg.num_bins = 1;
  cfg.noise_scale = 0.5f;
  cfg.seed = 11;
  Matrix out = lbp_perturb(post, cfg);
  for (int i = 0; i < post.rows; ++i) {
    float shift = out.at(i, 0) - post.at(i, 0);
    int argmax_in = 0, argmax_out = 0;
    for (int j = 0; j < 5; ++j) {
      CHECK(out.at(i, j) - post.at(i, j) == doctest::Approx(shift).epsilon(1e-5));
      if (post.at(i, j) > post.at(i, argmax_in)) argmax_in = j;
      if (out.at(i, j) > out.at(i, argmax_out)) argmax_out = j;
    }
    CHECK(argmax_in == argmax_out);
  }
}

TEST_CASE("lbp: per-element noise variance at N=C approaches 2 b^2") {
  const int rows = 20000, c = 5;
  Matrix post(rows, c);
  post.fill(1.0f / c);
  LbpConfig cfg;
  cfg.num_bins = c;
  cfg.noise_scale = 0.3f;
  cfg.seed = 13;
  Matrix out = lbp_perturb(post, cfg);
  double mean = 0, sq = 0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < c; ++j) {
      double noise = double(out.at(i, j)) - 1.0 / c;
      mean += noise;
      sq += noise * noise;
    }
  const double n = double(rows) * c;
  double var = sq / n - (mean / n) * (mean / n);
  double expect = 2.0 * cfg.noise_scale * cfg.noise_scale;
  CHECK(std::fabs(var - expect) / expect < 0.15);
}

TEST_CASE("lbp rejects bad configurations and inputs") {
  Matrix post = random_posteriors(3, 4, 1);
  LbpConfig cfg;
  cfg.num_bins = 5;  // more bins than classes
  CHECK_THROWS_AS(lbp_perturb(post, cfg), ConfigError);
  cfg.num_bins = 0;
  CHECK_THROWS_AS(lbp_perturb(post, cfg), ConfigError);

  cfg.num_bins = 2;
  Matrix off = post;
  off.at(0, 0) += 0.1f;  // off-simplex
  CHECK_THROWS_AS(lbp_perturb(off, cfg), Error);
}

TEST_CASE("dmp split obeys fractions and disjointness") {
  DmpConfig cfg;
  cfg.seed = 21;
  DmpSplit s = make_dmp_split(200, cfg);
  CHECK(s.private_ids.size() == 90);
  CHECK(s.reference_ids.size() == 90);
  CHECK(s.test_ids.size() == 20);
  std::vector<int8_t> seen(200, 0);
  for (int id : s.private_ids) seen[id]++;
  for (int id : s.reference_ids) seen[id]++;
  for (int id : s.test_ids) seen[id]++;
  for (int i = 0; i < 200; ++i) CHECK(seen[i] == 1);

  DmpConfig bad;
  bad.private_fraction = 0.5;  // no longer sums to 1
  CHECK_THROWS_AS(make_dmp_split(200, bad), ConfigError);
}

TEST_CASE("dmp with zero distillation weight reduces to normal training on the reference split") {
  Dataset ds = small_csbm(31);
  TrainHyper h = quick_hyper(20);
  DmpConfig cfg;
  cfg.kl_weight = 0.0f;
  cfg.seed = 33;
  TrainedModel dmp = train_dmp(ModelKind::GCN, ds, cfg, h);
  CHECK(dmp.regime == Regime::DMP);
  REQUIRE(dmp.stage_boundary.has_value());
  CHECK(*dmp.stage_boundary == 20);
  CHECK(dmp.curve.size() == 40);

  DmpSplit split = make_dmp_split(ds.num_nodes(), cfg);
  Dataset ref = ds;
  ref.split.train_ids = split.reference_ids;
  ref.split.test_ids = split.test_ids;
  TrainedModel norm = train_normal(ModelKind::GCN, ref, h);
  CHECK(params_equal(dmp.params, norm.params));
}

TEST_CASE("dmp rejects degenerate configurations") {
  Dataset ds = small_csbm();
  TrainHyper h = quick_hyper(5);
  DmpConfig cfg;
  cfg.kl_weight = 1.5f;
  CHECK_THROWS_AS(train_dmp(ModelKind::GCN, ds, cfg, h), ConfigError);
}
