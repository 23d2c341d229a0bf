#include "gtdlab/csbm.hpp"

#include <cmath>

#include "gtdlab/error.hpp"
#include "gtdlab/rng.hpp"

namespace gtdlab {

namespace {
constexpr double kPi = 3.14159265358979323846;

void validate(const CsbmConfig& cfg) {
  if (cfg.n < 4 || cfg.n % 2 != 0)
    throw ConfigError("config_csbm", "n must be even and at least 4");
  if (cfg.f < 1) throw ConfigError("config_csbm", "feature dim must be positive");
  if (cfg.avg_degree <= 0) throw ConfigError("config_csbm", "average degree must be positive");
  if (cfg.phi < -1.0 || cfg.phi > 1.0) throw ConfigError("config_csbm", "phi must lie in [-1, 1]");
  if (cfg.epsilon < 0.0) throw ConfigError("config_csbm", "epsilon must be non-negative");
}
}  // namespace

CsbmParams csbm_params(const CsbmConfig& cfg) {
  validate(cfg);
  CsbmParams p;
  p.mu = std::sqrt(double(cfg.n) / double(cfg.f) * (1.0 + cfg.epsilon)) * std::cos(cfg.phi * kPi / 2.0);
  p.lambda = std::sqrt(1.0 + cfg.epsilon) * std::sin(cfg.phi * kPi / 2.0);
  if (std::fabs(p.lambda) > std::sqrt(cfg.avg_degree))
    throw ConfigError("config_csbm", "invalid cSBM regime: |lambda| exceeds sqrt(d)");
  return p;
}

Dataset gen_csbm(const CsbmConfig& cfg) {
  CsbmParams p = csbm_params(cfg);
  const int n = cfg.n;
  const int f = cfg.f;
  Rng rng(derive_seed(cfg.seed, std::string_view("csbm")));

  Dataset ds;
  ds.num_classes = 2;

  // balanced communities, assignment shuffled by seed
  ds.labels.assign(n, 0);
  {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    for (int i = n / 2; i < n; ++i) ds.labels[order[i]] = 1;
  }

  // spike direction: i.i.d. zero-mean Gaussian entries with variance 1/f
  std::vector<double> u(f);
  const double inv_sqrt_f = 1.0 / std::sqrt(double(f));
  for (int j = 0; j < f; ++j) u[j] = rng.normal() * inv_sqrt_f;

  const double spike = std::sqrt(p.mu / double(n));
  ds.features = Matrix(n, f);
  for (int i = 0; i < n; ++i) {
    const double sigma = ds.labels[i] == 0 ? 1.0 : -1.0;
    float* row = ds.features.row(i);
    for (int j = 0; j < f; ++j)
      row[j] = float(spike * sigma * u[j] + rng.normal() * inv_sqrt_f);
  }

  const double sqrt_d = std::sqrt(cfg.avg_degree);
  const double p_intra = (cfg.avg_degree + p.lambda * sqrt_d) / double(n);
  const double p_inter = (cfg.avg_degree - p.lambda * sqrt_d) / double(n);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double pe = ds.labels[i] == ds.labels[j] ? p_intra : p_inter;
      if (rng.uniform() < pe) edges.emplace_back(i, j);
    }
  ds.graph = build_graph(n, edges);

  ds.split = split_nodes(n, cfg.train_fraction, derive_seed(cfg.seed, std::string_view("csbm-split")));
  return ds;
}

}  // namespace gtdlab
