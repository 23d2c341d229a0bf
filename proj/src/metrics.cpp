#include "gtdlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gtdlab/error.hpp"

namespace gtdlab {

double accuracy_posteriors(const Matrix& posteriors, std::span<const int> labels,
                           std::span<const int> node_ids) {
  if (node_ids.empty()) throw Error("empty_node_set", "accuracy needs at least one node");
  int64_t correct = 0;
  for (int id : node_ids) {
    const float* row = posteriors.row(id);
    int best = 0;
    for (int c = 1; c < posteriors.cols; ++c)
      if (row[c] > row[best]) best = c;
    if (best == labels[id]) ++correct;
  }
  return double(correct) / double(node_ids.size());
}

double accuracy(const ModelParams& model, const Dataset& ds, std::span<const int> node_ids) {
  NormAdj adj = normalize_adjacency(ds.graph);
  Matrix post = softmax_rows(forward(model, adj, ds.features));
  return accuracy_posteriors(post, ds.labels, node_ids);
}

LossHistogram loss_histogram(const ModelParams& model, const Dataset& ds, int bins) {
  if (bins < 1) throw Error("bad_bins", "need at least one bin");
  NormAdj adj = normalize_adjacency(ds.graph);
  Matrix logits = forward(model, adj, ds.features);
  auto member = softmax_xent(logits, ds.labels, ds.split.train_ids);
  auto nonmember = softmax_xent(logits, ds.labels, ds.split.test_ids);

  double max_loss = 0.0;
  for (double v : member.per_node) max_loss = std::max(max_loss, v);
  for (double v : nonmember.per_node) max_loss = std::max(max_loss, v);
  if (max_loss <= 0.0) max_loss = 1e-12;  // degenerate: all losses zero

  LossHistogram h;
  h.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) h.edges[b] = max_loss * double(b) / double(bins);
  h.member_counts.assign(bins, 0);
  h.nonmember_counts.assign(bins, 0);
  auto bin_of = [&](double v) {
    int b = static_cast<int>(std::floor(v / max_loss * bins));
    return std::clamp(b, 0, bins - 1);  // the max value lands in the last bin
  };
  for (double v : member.per_node) h.member_counts[bin_of(v)]++;
  for (double v : nonmember.per_node) h.nonmember_counts[bin_of(v)]++;
  return h;
}

double histogram_overlap(const LossHistogram& h) {
  int64_t m_total = 0, n_total = 0;
  for (auto v : h.member_counts) m_total += v;
  for (auto v : h.nonmember_counts) n_total += v;
  if (m_total == 0 || n_total == 0) return 0.0;
  double overlap = 0.0;
  for (size_t b = 0; b < h.member_counts.size(); ++b)
    overlap += std::min(double(h.member_counts[b]) / double(m_total),
                        double(h.nonmember_counts[b]) / double(n_total));
  return overlap;
}

MetricAggregate aggregate(std::span<const double> values) {
  MetricAggregate a;
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / double(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(sq / double(values.size() - 1));
  }
  return a;
}

void finalize_aggregates(ExperimentResult& r) {
  std::vector<double> acc, tr, te;
  std::map<std::string, std::vector<double>> auroc;
  for (const auto& rec : r.records) {
    if (rec.failed) continue;
    acc.push_back(rec.classify_acc);
    tr.push_back(rec.train_loss);
    te.push_back(rec.test_loss);
    for (const auto& [mode, v] : rec.attack_auroc) auroc[mode].push_back(v);
  }
  r.classify_acc = aggregate(acc);
  r.train_loss = aggregate(tr);
  r.test_loss = aggregate(te);
  r.attack_auroc.clear();
  for (const auto& [mode, vs] : auroc) r.attack_auroc[mode] = aggregate(vs);
}

namespace {

nlohmann::json agg_to_json(const MetricAggregate& a) {
  return {{"mean", a.mean}, {"stddev", a.stddev}};
}

MetricAggregate agg_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("stddev").get<double>()};
}

}  // namespace

void export_results(const ExperimentResult& r, const std::filesystem::path& json_path) {
  nlohmann::json j;
  j["schema_version"] = kResultsSchemaVersion;
  j["software_version"] = r.software_version;
  j["timestamp"] = r.timestamp;
  j["dataset"] = r.dataset_id;
  j["model"] = r.model;
  j["regime"] = r.regime;
  j["attack_modes"] = r.attack_modes;
  j["records"] = nlohmann::json::array();
  for (const auto& rec : r.records) {
    nlohmann::json jr = {{"repetition", rec.repetition}, {"seed", rec.seed},
                         {"classify_acc", rec.classify_acc}, {"train_loss", rec.train_loss},
                         {"test_loss", rec.test_loss},       {"attack_auroc", rec.attack_auroc},
                         {"failed", rec.failed}};
    if (rec.failed) jr["error"] = rec.error;
    j["records"].push_back(jr);
  }
  j["aggregate"] = {{"classify_acc", agg_to_json(r.classify_acc)},
                    {"train_loss", agg_to_json(r.train_loss)},
                    {"test_loss", agg_to_json(r.test_loss)}};
  nlohmann::json ja;
  for (const auto& [mode, a] : r.attack_auroc) ja[mode] = agg_to_json(a);
  j["aggregate"]["attack_auroc"] = ja;
  j["config"] = r.config_snapshot;

  std::ofstream f(json_path);
  if (!f) throw Error("io_error", "cannot write " + json_path.string());
  f << j.dump(2) << "\n";
}

ExperimentResult import_results(const std::filesystem::path& json_path) {
  std::ifstream f(json_path);
  if (!f) throw Error("io_error", "cannot read " + json_path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("results_parse", e.what());
  }
  for (const char* field : {"schema_version", "software_version", "dataset", "model", "regime",
                            "records", "aggregate", "config"})
    if (!j.contains(field)) throw Error("results_schema", std::string("missing field ") + field);
  if (j["schema_version"].get<int>() != kResultsSchemaVersion)
    throw Error("results_schema", "unsupported schema_version");

  ExperimentResult r;
  r.software_version = j["software_version"].get<std::string>();
  r.timestamp = j.value("timestamp", "");
  r.dataset_id = j["dataset"].get<std::string>();
  r.model = j["model"].get<std::string>();
  r.regime = j["regime"].get<std::string>();
  if (j.contains("attack_modes")) r.attack_modes = j["attack_modes"].get<std::vector<std::string>>();
  for (const auto& jr : j["records"]) {
    RepetitionRecord rec;
    rec.repetition = jr.at("repetition").get<int>();
    rec.seed = jr.at("seed").get<uint64_t>();
    rec.classify_acc = jr.at("classify_acc").get<double>();
    rec.train_loss = jr.at("train_loss").get<double>();
    rec.test_loss = jr.at("test_loss").get<double>();
    rec.attack_auroc = jr.at("attack_auroc").get<std::map<std::string, double>>();
    rec.failed = jr.value("failed", false);
    rec.error = jr.value("error", "");
    r.records.push_back(std::move(rec));
  }
  r.classify_acc = agg_from_json(j["aggregate"].at("classify_acc"));
  r.train_loss = agg_from_json(j["aggregate"].at("train_loss"));
  r.test_loss = agg_from_json(j["aggregate"].at("test_loss"));
  for (auto& [mode, a] : j["aggregate"].at("attack_auroc").items())
    r.attack_auroc[mode] = agg_from_json(a);
  r.config_snapshot = j["config"];
  return r;
}

void write_summary_csv(const ExperimentResult& r, const std::filesystem::path& csv_path) {
  std::ofstream f(csv_path);
  if (!f) throw Error("io_error", "cannot write " + csv_path.string());
  f << "dataset,model,regime,attack_mode,repetition,seed,classify_acc,attack_auroc,train_loss,"
       "test_loss\n";
  for (const auto& rec : r.records) {
    if (rec.failed) continue;
    for (const auto& [mode, auroc] : rec.attack_auroc)
      f << r.dataset_id << ',' << r.model << ',' << r.regime << ',' << mode << ','
        << rec.repetition << ',' << rec.seed << ',' << rec.classify_acc << ',' << auroc << ','
        << rec.train_loss << ',' << rec.test_loss << "\n";
  }
}

}  // namespace gtdlab
