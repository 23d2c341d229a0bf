#include "gtdlab/defense.hpp"

#include <algorithm>
#include <cmath>

#include "gtdlab/error.hpp"
#include "gtdlab/kernels.hpp"
#include "gtdlab/rng.hpp"

namespace gtdlab {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::Normal: return "normal";
    case Regime::Flatten: return "flatten";
    case Regime::FlattenGA: return "flatten_ga";
    case Regime::TwoStageNoFlatten: return "two_stage_no_flatten";
    case Regime::GTD: return "gtd";
    case Regime::DMP: return "dmp";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  if (s == "normal") return Regime::Normal;
  if (s == "flatten") return Regime::Flatten;
  if (s == "flatten_ga") return Regime::FlattenGA;
  if (s == "two_stage_no_flatten") return Regime::TwoStageNoFlatten;
  if (s == "gtd") return Regime::GTD;
  if (s == "dmp") return Regime::DMP;
  throw ConfigError("config_regime", "unknown regime '" + s + "'");
}

Matrix make_soft_labels(std::span<const int> labels, int num_classes, float beta) {
  if (num_classes < 2) throw Error("bad_num_classes", "soft labels need at least 2 classes");
  if (!(beta > 1.0f / float(num_classes)) || beta > 1.0f)
    throw Error("bad_flatten_param", "flatten param must lie in (1/C, 1]");
  const float off = (1.0f - beta) / float(num_classes - 1);
  Matrix s(static_cast<int>(labels.size()), num_classes);
  for (int i = 0; i < s.rows; ++i) {
    float* row = s.row(i);
    for (int j = 0; j < num_classes; ++j) row[j] = off;
    row[labels[i]] = beta;
  }
  return s;
}

std::vector<int> model_dims(ModelKind kind, const Dataset& ds, std::span<const int> hidden) {
  std::vector<int> h(hidden.begin(), hidden.end());
  if (h.empty()) h = default_hidden(kind);
  std::vector<int> dims;
  dims.push_back(ds.features.cols);
  if (kind != ModelKind::SGC)  // SGC is a single linear map on propagated features
    dims.insert(dims.end(), h.begin(), h.end());
  dims.push_back(ds.num_classes);
  return dims;
}

namespace {

// One supervised training stage: full-batch Adam on the given node set. The
// flattening rule swaps in soft labels for epochs whose mean supervised
// hard-label loss is below the threshold; with an ascent period, every
// ascent_period-th sub-threshold epoch instead steps uphill on the hard loss.
// The recorded curve is the ground-truth train/test loss of the dataset split,
// independent of the supervision driving the steps.
struct StageOpts {
  std::span<const int> sup_ids;
  std::span<const int> sup_labels;  // aligned with sup_ids
  bool flatten = false;
  int ascent_period = 0;  // 0 = off
};

void run_stage(ModelParams& params, AdamState& adam, const Dataset& ds, const NormAdj& adj,
               const TrainHyper& h, const StageOpts& opts,
               std::vector<std::pair<float, float>>& curve, Rng* dropout_rng) {
  if (opts.sup_ids.empty()) throw Error("empty_node_set", "training stage has no supervised nodes");
  Matrix soft;
  if (opts.flatten)
    soft = make_soft_labels(opts.sup_labels, ds.num_classes, h.flatten_param);
  Matrix hard = Matrix(static_cast<int>(opts.sup_ids.size()), ds.num_classes);
  for (int i = 0; i < hard.rows; ++i) hard.at(i, opts.sup_labels[i]) = 1.0f;

  int64_t sub_threshold_epochs = 0;
  for (int epoch = 0; epoch < h.epochs; ++epoch) {
    ForwardTrace trace;
    Matrix logits = forward_traced(params, adj, ds.features, trace, h.dropout, dropout_rng);

    auto sup_hard = softmax_xent_soft(logits, hard, opts.sup_ids);

    // ground-truth curve entry from the same forward pass
    auto tr = softmax_xent(logits, ds.labels, ds.split.train_ids);
    auto te = softmax_xent(logits, ds.labels, ds.split.test_ids);
    curve.emplace_back(float(tr.mean_loss), float(te.mean_loss));

    Matrix dlogits;
    bool ascend = false;
    if (opts.flatten && sup_hard.mean_loss < double(h.loss_threshold)) {
      ++sub_threshold_epochs;
      if (opts.ascent_period > 0 && sub_threshold_epochs % opts.ascent_period == 0) {
        ascend = true;
        dlogits = std::move(sup_hard.dlogits);
        for (auto& v : dlogits.data) v = -v;
      } else {
        dlogits = std::move(softmax_xent_soft(logits, soft, opts.sup_ids).dlogits);
      }
    } else {
      dlogits = std::move(sup_hard.dlogits);
    }
    (void)ascend;

    ModelGrads grads = backward(params, adj, ds.features, trace, dlogits);
    adam_step(params, grads, adam, h);
  }
}

TrainedModel train_one_stage(ModelKind kind, const Dataset& ds, const TrainHyper& h, Regime regime,
                             bool flatten, int ascent_period) {
  NormAdj adj = normalize_adjacency(ds.graph);
  TrainedModel out;
  out.regime = regime;
  out.params = init_params(kind, model_dims(kind, ds), h.seed);
  AdamState adam = make_adam_state(out.params);
  Rng drop_rng(derive_seed(h.seed, std::string_view("dropout")));

  std::vector<int> sup_labels(ds.split.train_ids.size());
  for (size_t i = 0; i < ds.split.train_ids.size(); ++i)
    sup_labels[i] = ds.labels[ds.split.train_ids[i]];

  StageOpts opts;
  opts.sup_ids = ds.split.train_ids;
  opts.sup_labels = sup_labels;
  opts.flatten = flatten;
  opts.ascent_period = ascent_period;
  run_stage(out.params, adam, ds, adj, h, opts, out.curve, h.dropout > 0 ? &drop_rng : nullptr);
  return out;
}

}  // namespace

TrainedModel train_normal(ModelKind kind, const Dataset& ds, const TrainHyper& h) {
  return train_one_stage(kind, ds, h, Regime::Normal, false, 0);
}

TrainedModel train_flatten(ModelKind kind, const Dataset& ds, const TrainHyper& h) {
  return train_one_stage(kind, ds, h, Regime::Flatten, true, 0);
}

TrainedModel train_flatten_ga(ModelKind kind, const Dataset& ds, const TrainHyper& h,
                              int ascent_period) {
  if (ascent_period < 2) throw ConfigError("config_ascent_period", "ascent period must be >= 2");
  return train_one_stage(kind, ds, h, Regime::FlattenGA, true, ascent_period);
}

TrainedModel train_gtd(ModelKind kind, const Dataset& ds, const TrainHyper& h, bool flatten) {
  NormAdj adj = normalize_adjacency(ds.graph);
  TrainedModel out;
  out.regime = flatten ? Regime::GTD : Regime::TwoStageNoFlatten;
  out.params = init_params(kind, model_dims(kind, ds), h.seed);
  Rng drop_rng(derive_seed(h.seed, std::string_view("dropout")));
  Rng* drng = h.dropout > 0 ? &drop_rng : nullptr;

  std::vector<int> train_labels(ds.split.train_ids.size());
  for (size_t i = 0; i < ds.split.train_ids.size(); ++i)
    train_labels[i] = ds.labels[ds.split.train_ids[i]];

  {
    AdamState adam = make_adam_state(out.params);
    StageOpts s1{ds.split.train_ids, train_labels, flatten, 0};
    run_stage(out.params, adam, ds, adj, h, s1, out.curve, drng);
  }

  // pseudolabels from the stage-1 model, computed once and frozen
  std::vector<int> pseudo(ds.split.test_ids.size());
  {
    Matrix logits = forward(out.params, adj, ds.features);
    for (size_t i = 0; i < ds.split.test_ids.size(); ++i) {
      const float* row = logits.row(ds.split.test_ids[i]);
      int best = 0;
      for (int c = 1; c < logits.cols; ++c)
        if (row[c] > row[best]) best = c;  // ties resolve to the lowest index
      pseudo[i] = best;
    }
  }

  out.stage_boundary = h.epochs;
  {
    AdamState adam = make_adam_state(out.params);  // fresh optimizer moments
    StageOpts s2{ds.split.test_ids, pseudo, flatten, 0};
    run_stage(out.params, adam, ds, adj, h, s2, out.curve, drng);
  }
  return out;
}

Matrix lbp_perturb(const Matrix& posteriors, const LbpConfig& cfg) {
  const int c = posteriors.cols;
  if (cfg.num_bins < 1) throw ConfigError("config_lbp_bins", "need at least one bin");
  if (cfg.num_bins > c)
    throw ConfigError("config_lbp_bins", "more bins than posterior entries");
  if (cfg.noise_scale < 0.0f) throw ConfigError("config_lbp_scale", "negative noise scale");
  for (int i = 0; i < posteriors.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += double(posteriors.at(i, j));
    if (std::fabs(s - 1.0) > 1e-4)
      throw Error("posterior_off_simplex",
                  "row " + std::to_string(i) + " sums to " + std::to_string(s));
  }

  Rng rng(derive_seed(cfg.seed, std::string_view("lbp")));
  Matrix out(posteriors.rows, c);
  std::vector<int> perm(c);
  const int base = c / cfg.num_bins;
  const int rem = c % cfg.num_bins;
  for (int i = 0; i < posteriors.rows; ++i) {
    for (int j = 0; j < c; ++j) perm[j] = j;
    rng.shuffle(perm);
    const float* in = posteriors.row(i);
    float* o = out.row(i);
    int pos = 0;
    for (int b = 0; b < cfg.num_bins; ++b) {
      int size = base + (b < rem ? 1 : 0);
      float noise = float(rng.laplace(double(cfg.noise_scale)));
      for (int k = 0; k < size; ++k, ++pos) o[perm[pos]] = in[perm[pos]] + noise;
    }
  }
  return out;
}

DmpSplit make_dmp_split(int n, const DmpConfig& cfg) {
  if (cfg.private_fraction <= 0 || cfg.reference_fraction <= 0 || cfg.test_fraction <= 0)
    throw ConfigError("config_dmp_fractions", "fractions must be positive");
  if (std::fabs(cfg.private_fraction + cfg.reference_fraction + cfg.test_fraction - 1.0) > 1e-9)
    throw ConfigError("config_dmp_fractions", "fractions must sum to 1");
  int n_priv = static_cast<int>(std::floor(n * cfg.private_fraction + 0.5));
  int n_ref = static_cast<int>(std::floor(n * cfg.reference_fraction + 0.5));
  if (n_priv < 1 || n_ref < 1 || n_priv + n_ref >= n)
    throw ConfigError("config_dmp_fractions", "degenerate split for n=" + std::to_string(n));
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  Rng rng(derive_seed(cfg.seed, std::string_view("dmp-split")));
  rng.shuffle(ids);
  DmpSplit s;
  s.private_ids.assign(ids.begin(), ids.begin() + n_priv);
  s.reference_ids.assign(ids.begin() + n_priv, ids.begin() + n_priv + n_ref);
  s.test_ids.assign(ids.begin() + n_priv + n_ref, ids.end());
  std::sort(s.private_ids.begin(), s.private_ids.end());
  std::sort(s.reference_ids.begin(), s.reference_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

TrainedModel train_dmp_on(ModelKind kind, const Dataset& ds, const DmpSplit& split,
                          float kl_weight, const TrainHyper& h) {
  if (split.private_ids.empty() || split.reference_ids.empty())
    throw Error("empty_node_set", "private and reference sets must be non-empty");
  if (kl_weight < 0.0f || kl_weight > 1.0f)
    throw ConfigError("config_dmp_weight", "kl weight must lie in [0, 1]");
  NormAdj adj = normalize_adjacency(ds.graph);
  const int c = ds.num_classes;

  // phase 1: unprotected teacher on the private set
  ModelParams teacher = init_params(kind, model_dims(kind, ds),
                                    derive_seed(h.seed, std::string_view("dmp-teacher")));
  TrainedModel out;
  out.regime = Regime::DMP;
  {
    // the teacher trains like a normal model whose split is (private, rest)
    Dataset view = ds;
    view.split.train_ids = split.private_ids;
    view.split.test_ids = split.test_ids;
    AdamState adam = make_adam_state(teacher);
    std::vector<int> priv_labels(split.private_ids.size());
    for (size_t i = 0; i < split.private_ids.size(); ++i)
      priv_labels[i] = ds.labels[split.private_ids[i]];
    StageOpts opts{split.private_ids, priv_labels, false, 0};
    Rng drop_rng(derive_seed(h.seed, std::string_view("dmp-teacher-dropout")));
    run_stage(teacher, adam, view, adj, h, opts, out.curve, h.dropout > 0 ? &drop_rng : nullptr);
  }

  // phase 2: teacher posteriors on the reference set
  Matrix teacher_ref(static_cast<int>(split.reference_ids.size()), c);
  {
    Matrix probs = softmax_rows(forward(teacher, adj, ds.features));
    for (size_t i = 0; i < split.reference_ids.size(); ++i)
      std::copy_n(probs.row(split.reference_ids[i]), c, teacher_ref.row(static_cast<int>(i)));
  }

  // phase 3: protected student on the reference set; the step target is the
  // (1-w) one-hot / w teacher mixture, whose gradient matches the combined loss
  Matrix mix(static_cast<int>(split.reference_ids.size()), c);
  for (size_t i = 0; i < split.reference_ids.size(); ++i) {
    float* row = mix.row(static_cast<int>(i));
    const float* t = teacher_ref.row(static_cast<int>(i));
    int y = ds.labels[split.reference_ids[i]];
    for (int j = 0; j < c; ++j) row[j] = (1.0f - kl_weight) * (j == y ? 1.0f : 0.0f) + kl_weight * t[j];
  }

  out.params = init_params(kind, model_dims(kind, ds), h.seed);
  out.stage_boundary = h.epochs;
  {
    AdamState adam = make_adam_state(out.params);
    Rng drop_rng(derive_seed(h.seed, std::string_view("dropout")));
    Rng* drng = h.dropout > 0 ? &drop_rng : nullptr;
    Dataset view = ds;
    view.split.train_ids = split.reference_ids;
    view.split.test_ids = split.test_ids;
    for (int epoch = 0; epoch < h.epochs; ++epoch) {
      ForwardTrace trace;
      Matrix logits = forward_traced(out.params, adj, ds.features, trace, h.dropout, drng);
      auto tr = softmax_xent(logits, ds.labels, view.split.train_ids);
      auto te = softmax_xent(logits, ds.labels, view.split.test_ids);
      out.curve.emplace_back(float(tr.mean_loss), float(te.mean_loss));

      auto step = softmax_xent_soft(logits, mix, split.reference_ids);
      ModelGrads grads = backward(out.params, adj, ds.features, trace, step.dlogits);
      adam_step(out.params, grads, adam, h);
    }
  }
  return out;
}

TrainedModel train_dmp(ModelKind kind, const Dataset& ds, const DmpConfig& cfg,
                       const TrainHyper& h) {
  DmpSplit split = make_dmp_split(ds.num_nodes(), cfg);
  return train_dmp_on(kind, ds, split, cfg.kl_weight, h);
}

TrainedModel train_regime(ModelKind kind, const Dataset& ds, const TrainHyper& h,
                          const RegimeSpec& spec) {
  switch (spec.regime) {
    case Regime::Normal: return train_normal(kind, ds, h);
    case Regime::Flatten: return train_flatten(kind, ds, h);
    case Regime::FlattenGA: return train_flatten_ga(kind, ds, h, spec.ascent_period);
    case Regime::TwoStageNoFlatten: return train_gtd(kind, ds, h, false);
    case Regime::GTD: return train_gtd(kind, ds, h, true);
    case Regime::DMP: return train_dmp(kind, ds, spec.dmp, h);
  }
  throw Error("bad_regime", "unhandled regime");
}

}  // namespace gtdlab
