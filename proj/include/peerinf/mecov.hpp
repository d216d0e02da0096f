#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "peerinf/embed.hpp"

namespace peerinf {

// Per-node covariance estimates of the embedding measurement error
// Uhat_i - U_i at the observed sample size. Each matrix is d x d, symmetric,
// and positive semidefinite up to a small eigenvalue tolerance.
struct NodeCovariances {
  std::vector<Eigen::MatrixXd> per_node;
  std::string variant;  // "rdpg-plugin" or "sbm-cluster"
  std::optional<std::vector<int>> cluster_assignments;
  int n() const { return static_cast<int>(per_node.size()); }
};

// Plug-in estimator evaluated at every embedded row.
NodeCovariances delta_rdpg(const Embedding& emb);

// Cluster-level plug-in: k-means the embedding rows, evaluate the covariance
// formula at the cluster centers, give every node its cluster's matrix.
NodeCovariances delta_sbm(const Embedding& emb, int k, std::uint64_t seed);

// The covariance formula at explicit centers and proportions, n_nodes being
// the sample size the per-node covariance refers to. Exposed so the
// center-level behaviour can be inspected directly.
std::vector<Eigen::MatrixXd> sbm_cluster_covariances(const Eigen::MatrixXd& centers,
                                                     const Eigen::VectorXd& proportions,
                                                     int n_nodes);

// Bias-correction matrix: the top-left d x d block holds the sum of the
// per-node covariances and everything else is zero. q_nonlatent extra rows
// and columns of zeros follow the latent block, matching a design matrix
// whose latent columns come first. The row-subset overload sums only the
// listed nodes, for fits restricted to a subset of rows.
Eigen::MatrixXd assemble_omega(const NodeCovariances& cov, int q_nonlatent);
Eigen::MatrixXd assemble_omega(const NodeCovariances& cov, int q_nonlatent,
                               const std::vector<int>& rows);

void save_node_covariances_csv(const NodeCovariances& cov,
                               const std::filesystem::path& path);

}  // namespace peerinf
