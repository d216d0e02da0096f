#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "peerinf/graph.hpp"
#include "peerinf/netgen.hpp"

namespace peerinf {

enum class Study { A, B, C, D };

// Outcome panel coefficients:
//   Y1 = V1
//   Y2 = prev_multiplier * (U beta) + alpha * Y1 + V2
//   Y3 = alpha * Y2 + U beta + rho * L Y2 + V3
// with V entries iid N(0, noise_sd^2) drawn in node order for Y1, then Y2,
// then Y3, and L the row-normalized adjacency (zero rows for isolates).
struct PanelConfig {
  double alpha = 0.6;
  double rho = 0.3;
  Eigen::VectorXd beta;
  double prev_multiplier = 1.0;
  double noise_sd = 1.0;
};

struct Panel {
  Eigen::VectorXd y1, y2, y3;
};

Panel simulate_panel(const LatentFactors& factors, const Graph& g, const PanelConfig& cfg,
                     std::uint64_t seed);

// One Monte Carlo study. The sweep holds node counts (A, C), graph densities
// (B), or the previous-period multiplier m (D). Replicates get independent
// sub-seeds; a failed replicate is resampled (at most 5% of the study, at
// most 10 attempts each) so the table is fully deterministic given the seed.
struct StudyConfig {
  Study study = Study::A;
  std::vector<double> sweep;
  int reps = 200;
  double alpha = 0.6;
  double rho = 0.3;
  Eigen::VectorXd beta;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

// Published design for each study: sweeps, beta, and reps = 200.
StudyConfig default_study_config(Study study, std::uint64_t seed);

struct BiasRow {
  double sweep;
  std::string method;  // no-latent, ase-uncorrected, bias-corrected
  double mean_rho_hat;
  double bias;
  double mc_se;
};

struct BiasTable {
  std::vector<BiasRow> rows;
};

BiasTable run_study(const StudyConfig& cfg);

// Long-format CSV: sweep,method,mean_rho_hat,bias,mc_se.
void save_bias_table_csv(const BiasTable& table, const std::filesystem::path& path);

}  // namespace peerinf
