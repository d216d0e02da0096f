#include "peerinf/mecov.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "peerinf/csv.hpp"
#include "peerinf/errors.hpp"
#include "peerinf/kmeans.hpp"

namespace peerinf {

namespace {

// Symmetric inverse with an explicit conditioning gate, so collinear
// embeddings fail loudly instead of producing garbage corrections.
Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& f, const char* who) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f);
  if (es.info() != Eigen::Success)
    throw NumericalError(std::string(who) + ": eigendecomposition failed");
  const auto& ev = es.eigenvalues();
  if (ev.minCoeff() <= 0.0 || ev.maxCoeff() / ev.minCoeff() >= 1e12)
    throw NumericalError(std::string(who) +
                         ": second-moment matrix is singular; the embedding "
                         "columns (or cluster centers) are collinear");
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace

NodeCovariances delta_rdpg(const Embedding& emb) {
  const int n = emb.n();
  const int d = emb.d();
  if (n < 1) throw DataError("delta_rdpg: empty embedding");
  const Eigen::MatrixXd& u = emb.uhat;

  Eigen::MatrixXd f = (u.transpose() * u) / n;
  Eigen::MatrixXd finv = checked_inverse(f, "delta_rdpg");

  NodeCovariances cov;
  cov.variant = "rdpg-plugin";
  cov.per_node.reserve(static_cast<size_t>(n));
  Eigen::VectorXd w(n);
  Eigen::MatrixXd weighted(n, d);
  for (int i = 0; i < n; ++i) {
    w = (u * u.row(i).transpose()).cwiseMax(0.0).cwiseMin(1.0);
    w = w.array() * (1.0 - w.array());
    weighted = u.array().colwise() * w.array();
    Eigen::MatrixXd inner = (u.transpose() * weighted) / n;
    cov.per_node.push_back(symmetrized(finv * inner * finv / n));
  }
  return cov;
}

std::vector<Eigen::MatrixXd> sbm_cluster_covariances(const Eigen::MatrixXd& centers,
                                                     const Eigen::VectorXd& proportions,
                                                     int n_nodes) {
  const int k = static_cast<int>(centers.rows());
  const int d = static_cast<int>(centers.cols());
  if (k < 1) throw ConfigError("sbm_cluster_covariances: need at least one center");
  if (proportions.size() != k)
    throw ConfigError("sbm_cluster_covariances: proportions must match the center count");
  if (proportions.minCoeff() <= 0.0 || std::fabs(proportions.sum() - 1.0) > 1e-6)
    throw ConfigError("sbm_cluster_covariances: proportions must be positive and sum to one");
  if (n_nodes < 1) throw ConfigError("sbm_cluster_covariances: n_nodes must be positive");

  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
  for (int q = 0; q < k; ++q)
    f += proportions(q) * centers.row(q).transpose() * centers.row(q);
  Eigen::MatrixXd finv = checked_inverse(f, "sbm_cluster_covariances");

  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<size_t>(k));
  for (int q = 0; q < k; ++q) {
    Eigen::MatrixXd inner = Eigen::MatrixXd::Zero(d, d);
    for (int l = 0; l < k; ++l) {
      double c = centers.row(q).dot(centers.row(l));
      c = std::min(1.0, std::max(0.0, c));
      inner += proportions(l) * c * (1.0 - c) * centers.row(l).transpose() * centers.row(l);
    }
    out.push_back(symmetrized(finv * inner * finv / n_nodes));
  }
  return out;
}

NodeCovariances delta_sbm(const Embedding& emb, int k, std::uint64_t seed) {
  const int n = emb.n();
  if (k < 1) throw ConfigError("delta_sbm: k must be positive");
  if (n < k) throw ConfigError("delta_sbm: fewer nodes than clusters");

  KmeansResult km = kmeans(emb.uhat, k, seed);
  Eigen::VectorXd props = Eigen::VectorXd::Zero(k);
  for (int label : km.labels) props(label) += 1.0;
  props /= n;

  auto per_cluster = sbm_cluster_covariances(km.centers, props, n);

  NodeCovariances cov;
  cov.variant = "sbm-cluster";
  cov.cluster_assignments = km.labels;
  cov.per_node.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    cov.per_node.push_back(per_cluster[static_cast<size_t>(km.labels[static_cast<size_t>(i)])]);
  return cov;
}

Eigen::MatrixXd assemble_omega(const NodeCovariances& cov, int q_nonlatent) {
  std::vector<int> all(static_cast<size_t>(cov.n()));
  for (int i = 0; i < cov.n(); ++i) all[static_cast<size_t>(i)] = i;
  return assemble_omega(cov, q_nonlatent, all);
}

Eigen::MatrixXd assemble_omega(const NodeCovariances& cov, int q_nonlatent,
                               const std::vector<int>& rows) {
  if (cov.per_node.empty()) throw DataError("assemble_omega: no node covariances");
  if (q_nonlatent < 0) throw ConfigError("assemble_omega: negative predictor count");
  const int d = static_cast<int>(cov.per_node.front().rows());
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d);
  for (int i : rows) {
    if (i < 0 || i >= cov.n())
      throw DataError("assemble_omega: node index " + std::to_string(i) + " out of range");
    const auto& m = cov.per_node[static_cast<size_t>(i)];
    if (m.rows() != d || m.cols() != d)
      throw DataError("assemble_omega: inconsistent covariance dimensions");
    sum += m;
  }
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(d + q_nonlatent, d + q_nonlatent);
  omega.topLeftCorner(d, d) = sum;
  return omega;
}

void save_node_covariances_csv(const NodeCovariances& cov,
                               const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < cov.n(); ++i) {
    const auto& m = cov.per_node[static_cast<size_t>(i)];
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c)
        rows.push_back({std::to_string(i), std::to_string(r), std::to_string(c),
                        fmt_double(m(r, c))});
  }
  write_csv(path, {"node", "row", "col", "value"}, rows);
}

}  // namespace peerinf
