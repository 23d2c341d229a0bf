#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtdlab/graph.hpp"
#include "gtdlab/nn.hpp"

namespace gtdlab {

inline constexpr const char* kSoftwareVersion = "gtdlab 0.1.0";
inline constexpr int kResultsSchemaVersion = 1;

/// Fraction of nodes whose argmax posterior matches the label; argmax ties
/// break to the lowest class index.
double accuracy(const ModelParams& model, const Dataset& ds, std::span<const int> node_ids);
double accuracy_posteriors(const Matrix& posteriors, std::span<const int> labels,
                           std::span<const int> node_ids);

/// Per-node hard-label loss histogram split by membership. Uniform bins over
/// [0, max observed loss].
struct LossHistogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<int64_t> member_counts;
  std::vector<int64_t> nonmember_counts;
};

LossHistogram loss_histogram(const ModelParams& model, const Dataset& ds, int bins);

/// Overlap coefficient of the two normalized histograms: sum of bin-wise minima.
double histogram_overlap(const LossHistogram& h);

struct RepetitionRecord {
  int repetition = 0;
  uint64_t seed = 0;
  double classify_acc = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::map<std::string, double> attack_auroc;  // attack mode -> auroc
  bool failed = false;
  std::string error;
};

struct MetricAggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n-1)
};

struct ExperimentResult {
  std::string dataset_id;
  std::string model;
  std::string regime;
  std::vector<std::string> attack_modes;
  std::vector<RepetitionRecord> records;
  MetricAggregate classify_acc;
  MetricAggregate train_loss;
  MetricAggregate test_loss;
  std::map<std::string, MetricAggregate> attack_auroc;
  nlohmann::json config_snapshot;
  std::string software_version = kSoftwareVersion;
  std::string timestamp;  // informational only; excluded from determinism checks
};

MetricAggregate aggregate(std::span<const double> values);

/// Recomputes every aggregate from the per-repetition records.
void finalize_aggregates(ExperimentResult& r);

void export_results(const ExperimentResult& r, const std::filesystem::path& json_path);
ExperimentResult import_results(const std::filesystem::path& json_path);

/// One CSV row per (repetition, attack mode).
void write_summary_csv(const ExperimentResult& r, const std::filesystem::path& csv_path);

}  // namespace gtdlab
