#pragma once

#include <cstdint>

#include "gtdlab/graph.hpp"

namespace gtdlab {

/// Two-community contextual stochastic block model. phi interpolates between
/// feature-informative (phi = 0) and topology-informative (|phi| = 1) graphs;
/// positive phi is homophilic, negative heterophilic.
struct CsbmConfig {
  int n = 1000;            // even; two balanced communities
  double avg_degree = 20;  // d
  int f = 100;             // feature dim
  double phi = 0.0;        // in [-1, 1]
  double epsilon = 15.0;   // tolerance in the mu/lambda formulas
  double train_fraction = 0.5;
  uint64_t seed = 1;
};

struct CsbmParams {
  double mu = 0.0;
  double lambda = 0.0;
};

/// mu = sqrt(n/f (1+eps)) cos(phi pi/2), lambda = sqrt(1+eps) sin(phi pi/2).
/// Throws when |lambda| > sqrt(d) (edge probabilities would leave [0, 1]).
CsbmParams csbm_params(const CsbmConfig& cfg);

/// Samples a dataset: balanced labels shuffled by seed, spike features
/// x_i = sqrt(mu/n) sigma_i u + z_i / sqrt(f), and independent edges with
/// intra-class probability (d + lambda sqrt(d))/n and inter-class
/// (d - lambda sqrt(d))/n. The canonical split comes from split_nodes.
Dataset gen_csbm(const CsbmConfig& cfg);

}  // namespace gtdlab
