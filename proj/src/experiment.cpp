#include "gtdlab/experiment.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <thread>

#include "gtdlab/error.hpp"
#include "gtdlab/rng.hpp"

namespace gtdlab {

namespace {

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string iso_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (d.contains("path")) cfg.dataset_dir = d.at("path").get<std::string>();
    if (d.contains("csbm")) {
      CsbmConfig c;
      const auto& jc = d.at("csbm");
      maybe_get(jc, "n", c.n);
      maybe_get(jc, "avg_degree", c.avg_degree);
      maybe_get(jc, "f", c.f);
      maybe_get(jc, "phi", c.phi);
      maybe_get(jc, "epsilon", c.epsilon);
      maybe_get(jc, "seed", c.seed);
      cfg.csbm = c;
    }
  }
  if (j.contains("model")) cfg.model = model_kind_from_string(j.at("model").get<std::string>());
  if (j.contains("regime"))
    cfg.regime_spec.regime = regime_from_string(j.at("regime").get<std::string>());
  maybe_get(j, "ascent_period", cfg.regime_spec.ascent_period);
  if (j.contains("dmp")) {
    const auto& jd = j.at("dmp");
    maybe_get(jd, "private_fraction", cfg.regime_spec.dmp.private_fraction);
    maybe_get(jd, "reference_fraction", cfg.regime_spec.dmp.reference_fraction);
    maybe_get(jd, "test_fraction", cfg.regime_spec.dmp.test_fraction);
    maybe_get(jd, "kl_weight", cfg.regime_spec.dmp.kl_weight);
  }
  if (j.contains("lbp")) {
    LbpConfig l;
    maybe_get(j.at("lbp"), "num_bins", l.num_bins);
    maybe_get(j.at("lbp"), "noise_scale", l.noise_scale);
    cfg.lbp = l;
  }
  if (j.contains("hyper")) {
    const auto& h = j.at("hyper");
    maybe_get(h, "learning_rate", cfg.hyper.learning_rate);
    maybe_get(h, "epochs", cfg.hyper.epochs);
    maybe_get(h, "loss_threshold", cfg.hyper.loss_threshold);
    maybe_get(h, "flatten_param", cfg.hyper.flatten_param);
    maybe_get(h, "weight_decay", cfg.hyper.weight_decay);
    maybe_get(h, "adam_beta1", cfg.hyper.adam_beta1);
    maybe_get(h, "adam_beta2", cfg.hyper.adam_beta2);
    maybe_get(h, "adam_eps", cfg.hyper.adam_eps);
    maybe_get(h, "dropout", cfg.hyper.dropout);
  }
  if (j.contains("attack_modes")) {
    cfg.attack_modes.clear();
    for (const auto& m : j.at("attack_modes"))
      cfg.attack_modes.push_back(attack_mode_from_string(m.get<std::string>()));
  }
  maybe_get(j, "split_ratio", cfg.split_ratio);
  maybe_get(j, "sort_posteriors", cfg.sort_posteriors);
  maybe_get(j, "repetitions", cfg.repetitions);
  maybe_get(j, "base_seed", cfg.base_seed);
  if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
  maybe_get(j, "jobs", cfg.jobs);
  maybe_get(j, "write_scores", cfg.write_scores);
  maybe_get(j, "dataset_id", cfg.dataset_id);
  return cfg;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  nlohmann::json d;
  if (cfg.dataset_dir) d["path"] = cfg.dataset_dir->string();
  if (cfg.csbm)
    d["csbm"] = {{"n", cfg.csbm->n},     {"avg_degree", cfg.csbm->avg_degree},
                 {"f", cfg.csbm->f},     {"phi", cfg.csbm->phi},
                 {"epsilon", cfg.csbm->epsilon}, {"seed", cfg.csbm->seed}};
  j["dataset"] = d;
  j["dataset_id"] = cfg.dataset_id;
  j["model"] = to_string(cfg.model);
  j["regime"] = to_string(cfg.regime_spec.regime);
  j["ascent_period"] = cfg.regime_spec.ascent_period;
  j["dmp"] = {{"private_fraction", cfg.regime_spec.dmp.private_fraction},
              {"reference_fraction", cfg.regime_spec.dmp.reference_fraction},
              {"test_fraction", cfg.regime_spec.dmp.test_fraction},
              {"kl_weight", cfg.regime_spec.dmp.kl_weight}};
  if (cfg.lbp)
    j["lbp"] = {{"num_bins", cfg.lbp->num_bins}, {"noise_scale", cfg.lbp->noise_scale}};
  j["hyper"] = {{"learning_rate", cfg.hyper.learning_rate},
                {"epochs", cfg.hyper.epochs},
                {"loss_threshold", cfg.hyper.loss_threshold},
                {"flatten_param", cfg.hyper.flatten_param},
                {"weight_decay", cfg.hyper.weight_decay},
                {"adam_beta1", cfg.hyper.adam_beta1},
                {"adam_beta2", cfg.hyper.adam_beta2},
                {"adam_eps", cfg.hyper.adam_eps},
                {"dropout", cfg.hyper.dropout}};
  nlohmann::json modes = nlohmann::json::array();
  for (auto m : cfg.attack_modes) modes.push_back(to_string(m));
  j["attack_modes"] = modes;
  j["split_ratio"] = cfg.split_ratio;
  j["sort_posteriors"] = cfg.sort_posteriors;
  j["repetitions"] = cfg.repetitions;
  j["base_seed"] = cfg.base_seed;
  j["out"] = cfg.out_dir.string();
  j["jobs"] = cfg.jobs;
  j["write_scores"] = cfg.write_scores;
  return j;
}

void validate_config(const ExperimentConfig& cfg) {
  if (!cfg.dataset_dir && !cfg.csbm)
    throw ConfigError("config_dataset", "config needs a dataset path or a csbm block");
  if (cfg.dataset_dir && cfg.csbm)
    throw ConfigError("config_dataset", "dataset path and csbm block are mutually exclusive");
  if (cfg.repetitions < 1) throw ConfigError("config_repetitions", "repetitions must be >= 1");
  if (cfg.split_ratio <= 0.0 || cfg.split_ratio >= 1.0)
    throw ConfigError("config_split_ratio", "train fraction must lie in (0, 1)");
  if (cfg.jobs < 1) throw ConfigError("config_jobs", "jobs must be >= 1");
  if (cfg.hyper.epochs < 1) throw ConfigError("config_epochs", "epochs must be >= 1");
  if (cfg.hyper.learning_rate <= 0) throw ConfigError("config_lr", "learning rate must be positive");
  if (cfg.regime_spec.regime == Regime::FlattenGA && cfg.regime_spec.ascent_period < 2)
    throw ConfigError("config_ascent_period", "ascent period must be >= 2");
}

uint64_t repetition_seed(uint64_t base_seed, int repetition) {
  return derive_seed(base_seed, uint64_t(repetition));
}

std::filesystem::path next_run_dir(const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  int max_seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(out)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("run-", 0) == 0) {
      int idx = std::atoi(name.c_str() + 4);
      max_seen = std::max(max_seen, idx);
    }
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "run-%04d", max_seen + 1);
  std::filesystem::path dir = out / buf;
  std::filesystem::create_directories(dir);
  return dir;
}

namespace {

std::string default_dataset_id(const ExperimentConfig& cfg) {
  if (!cfg.dataset_id.empty()) return cfg.dataset_id;
  if (cfg.dataset_dir) return cfg.dataset_dir->filename().string();
  char buf[64];
  std::snprintf(buf, sizeof buf, "csbm(phi=%g,n=%d)", cfg.csbm->phi, cfg.csbm->n);
  return buf;
}

struct RepOutcome {
  RepetitionRecord record;
  std::vector<std::pair<std::string, std::string>> score_files;  // filename -> content
};

RepOutcome run_repetition(const ExperimentConfig& cfg, const Dataset* base, int rep) {
  RepOutcome out;
  uint64_t seed_r = repetition_seed(cfg.base_seed, rep);
  out.record.repetition = rep;
  out.record.seed = seed_r;

  Dataset ds;
  if (cfg.csbm) {
    CsbmConfig c = *cfg.csbm;
    c.seed = derive_seed(seed_r, std::string_view("csbm"));
    c.train_fraction = cfg.split_ratio;
    ds = gen_csbm(c);
  } else {
    ds = *base;
  }
  ds.split = split_nodes(ds.num_nodes(), cfg.split_ratio, derive_seed(seed_r, std::string_view("split")));

  TrainHyper hyper = cfg.hyper;
  hyper.seed = derive_seed(seed_r, std::string_view("train"));
  RegimeSpec spec = cfg.regime_spec;
  if (spec.regime == Regime::DMP) spec.dmp.seed = derive_seed(seed_r, std::string_view("dmp"));

  TrainedModel target = train_regime(cfg.model, ds, hyper, spec);
  if (spec.regime == Regime::DMP) {
    // label membership for the distillation defense covers both phases'
    // supervision: private (teacher) plus reference (student)
    DmpSplit dsplit = make_dmp_split(ds.num_nodes(), spec.dmp);
    SplitMask m;
    m.train_ids = dsplit.private_ids;
    m.train_ids.insert(m.train_ids.end(), dsplit.reference_ids.begin(), dsplit.reference_ids.end());
    std::sort(m.train_ids.begin(), m.train_ids.end());
    m.test_ids = dsplit.test_ids;
    ds.split = std::move(m);
  }

  NormAdj adj = normalize_adjacency(ds.graph);
  Matrix released = softmax_rows(forward(target.params, adj, ds.features));
  if (cfg.lbp) {
    LbpConfig l = *cfg.lbp;
    l.seed = derive_seed(seed_r, std::string_view("lbp-acc"));
    released = lbp_perturb(released, l);
  }
  out.record.classify_acc = accuracy_posteriors(released, ds.labels, ds.split.test_ids);
  out.record.train_loss = target.curve.back().first;
  out.record.test_loss = target.curve.back().second;

  for (AttackMode mode : cfg.attack_modes) {
    std::string mode_str = to_string(mode);
    ShadowSplit shadow =
        make_shadow_split(ds.split, mode, derive_seed(seed_r, std::string_view("shadow"), mode_str));
    // same split (hard) or minimally overlapping split (weak), same regime and
    // architecture; the attacker's own initialization seed
    TrainHyper shadow_hyper = hyper;
    shadow_hyper.seed = derive_seed(seed_r, std::string_view("shadow-train"), mode_str);
    TrainedModel shadow_model = train_shadow(cfg.model, ds, shadow, shadow_hyper, spec);

    AttackDataset ads = build_attack_dataset(shadow_model.params, ds, shadow, cfg.sort_posteriors);
    TrainHyper attack_hyper = cfg.hyper;
    attack_hyper.seed = derive_seed(seed_r, std::string_view("attack"), mode_str);
    AttackModel am = train_attack(ads, attack_hyper);

    std::optional<LbpConfig> lbp = cfg.lbp;
    if (lbp) lbp->seed = derive_seed(seed_r, std::string_view("lbp-attack"), mode_str);
    AttackScore sc = score_attack(am, target.params, ds, lbp, cfg.sort_posteriors);
    out.record.attack_auroc[mode_str] = sc.auroc;

    if (cfg.write_scores) {
      std::vector<int8_t> member(ds.num_nodes(), 0);
      for (int id : ds.split.train_ids) member[id] = 1;
      std::string body = "node_id\tscore\tmembership\n";
      char line[64];
      for (int i = 0; i < ds.num_nodes(); ++i) {
        std::snprintf(line, sizeof line, "%d\t%.9g\t%d\n", i, double(sc.scores[i]), int(member[i]));
        body += line;
      }
      char fname[64];
      std::snprintf(fname, sizeof fname, "scores_rep%d_%s.tsv", rep, mode_str.c_str());
      out.score_files.emplace_back(fname, std::move(body));
    }
  }
  return out;
}

}  // namespace

RunOutput run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);

  Dataset base;
  const Dataset* base_ptr = nullptr;
  if (cfg.dataset_dir) {
    base = load_dataset(*cfg.dataset_dir);
    base_ptr = &base;
  }

  RunOutput out;
  out.run_dir = next_run_dir(cfg.out_dir);
  out.result.dataset_id = default_dataset_id(cfg);
  out.result.model = to_string(cfg.model);
  out.result.regime = to_string(cfg.regime_spec.regime);
  for (auto m : cfg.attack_modes) out.result.attack_modes.push_back(to_string(m));
  out.result.config_snapshot = experiment_config_to_json(cfg);
  out.result.timestamp = iso_timestamp();
  out.result.records.resize(cfg.repetitions);

  std::vector<std::vector<std::pair<std::string, std::string>>> score_files(cfg.repetitions);
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      int rep = next.fetch_add(1);
      if (rep >= cfg.repetitions) return;
      try {
        RepOutcome o = run_repetition(cfg, base_ptr, rep);
        out.result.records[rep] = std::move(o.record);
        score_files[rep] = std::move(o.score_files);
      } catch (const std::exception& e) {
        RepetitionRecord rec;
        rec.repetition = rep;
        rec.seed = repetition_seed(cfg.base_seed, rep);
        rec.failed = true;
        rec.error = e.what();
        out.result.records[rep] = std::move(rec);
      }
    }
  };
  if (cfg.jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(cfg.jobs, cfg.repetitions); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  bool any_ok = false;
  for (const auto& rec : out.result.records) any_ok |= !rec.failed;
  finalize_aggregates(out.result);
  export_results(out.result, out.run_dir / "results.json");
  write_summary_csv(out.result, out.run_dir / "summary.csv");
  for (const auto& files : score_files)
    for (const auto& [name, body] : files) {
      std::ofstream f(out.run_dir / name);
      f << body;
    }
  if (!any_ok) {
    std::string first = out.result.records.empty() ? "" : out.result.records.front().error;
    throw Error("experiment_failed", "all repetitions failed: " + first);
  }
  return out;
}

SweepOutput run_sweep(const ExperimentConfig& base, std::span<const double> phis,
                      std::span<const double> ratios) {
  if (!base.csbm) throw ConfigError("config_sweep", "sweep needs a csbm dataset source");
  if (phis.empty()) throw ConfigError("config_sweep", "empty phi list");
  if (ratios.empty()) throw ConfigError("config_sweep", "empty ratio list");

  SweepOutput out;
  out.dir = next_run_dir(base.out_dir / "sweep");
  for (double ratio : ratios) {
    for (double phi : phis) {
      ExperimentConfig cfg = base;
      cfg.csbm->phi = phi;
      cfg.split_ratio = ratio;
      cfg.attack_modes = {AttackMode::Hard, AttackMode::Weak};
      cfg.out_dir = out.dir;
      RunOutput run = run_experiment(cfg);
      SweepCell cell;
      cell.phi = phi;
      cell.ratio = ratio;
      cell.hard_auroc = run.result.attack_auroc.at("hard").mean;
      cell.weak_auroc = run.result.attack_auroc.at("weak").mean;
      cell.diff = cell.hard_auroc - cell.weak_auroc;
      out.cells.push_back(cell);
    }
  }

  std::ofstream csv(out.dir / "sweep_summary.csv");
  csv << "phi,train_fraction,hard_auroc,weak_auroc,hard_minus_weak\n";
  for (const auto& c : out.cells)
    csv << c.phi << ',' << c.ratio << ',' << c.hard_auroc << ',' << c.weak_auroc << ',' << c.diff
        << "\n";

  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : out.cells)
    j.push_back({{"phi", c.phi},
                 {"train_fraction", c.ratio},
                 {"hard_auroc", c.hard_auroc},
                 {"weak_auroc", c.weak_auroc},
                 {"hard_minus_weak", c.diff}});
  std::ofstream jf(out.dir / "sweep.json");
  jf << j.dump(2) << "\n";
  return out;
}

}  // namespace gtdlab
