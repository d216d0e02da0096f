#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "peerinf/graph.hpp"

namespace peerinf {

enum class LatentKind { Sbm, Dcsbm };

// Configuration for block-structured latent positions. K clusters live in
// d dimensions; cluster_directions is K x d, cluster_probs sums to one.
// target_density <= 0 means "no density rescaling" (scale stays 1).
struct LatentConfig {
  int n = 0;
  int d = 0;
  LatentKind kind = LatentKind::Sbm;
  Eigen::MatrixXd cluster_directions;
  Eigen::VectorXd cluster_probs;
  double degree_log_mean = 0.0;  // dcsbm only
  double degree_log_sd = 0.5;    // dcsbm only
  double target_density = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Scaled latent positions: P = values * values^T entrywise in [0,1].
// `scale` is the factor applied to P by density rescaling (1 if none);
// `labels` records cluster memberships for block models.
struct LatentFactors {
  Eigen::MatrixXd values;
  double scale = 1.0;
  std::vector<int> labels;
};

// SBM rows: one cluster direction per node. With a target density the rows
// are rescaled so that mean offdiagonal P equals the target exactly.
LatentFactors build_sbm_factors(const LatentConfig& cfg);

// DCSBM rows: theta_i * direction(cluster_i) with theta lognormal. Theta
// draws are capped at the largest value keeping max offdiagonal P at or
// below 1 after density rescaling; the rescale factor is then recomputed on
// the capped draws so mean offdiagonal P equals the target exactly.
LatentFactors build_dcsbm_factors(const LatentConfig& cfg);

// Bernoulli graph with P = values * values^T. Entries outside [0,1] by more
// than 1e-9 are an error; smaller excursions are clamped.
Graph gen_rdpg(const LatentFactors& factors, std::uint64_t seed);

// Mean offdiagonal entry of values * values^T (the expected density).
double expected_density(const LatentFactors& factors);

}  // namespace peerinf
