#include "peerinf/netgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "peerinf/errors.hpp"
#include "peerinf/rng.hpp"

namespace peerinf {

void LatentConfig::validate() const {
  if (n < 2) throw ConfigError("latent config: n must be at least 2");
  if (d < 1) throw ConfigError("latent config: d must be positive");
  const auto k = cluster_directions.rows();
  if (k < 1) throw ConfigError("latent config: at least one cluster direction required");
  if (cluster_directions.cols() != d)
    throw ConfigError("latent config: cluster_directions must have d columns");
  if (cluster_probs.size() != k)
    throw ConfigError("latent config: cluster_probs must have one entry per direction");
  if ((cluster_probs.array() < -1e-12).any())
    throw ConfigError("latent config: cluster_probs must be nonnegative");
  if (std::fabs(cluster_probs.sum() - 1.0) > 1e-9)
    throw ConfigError("latent config: cluster_probs must sum to 1");
  if (target_density > 1.0)
    throw ConfigError("latent config: target_density must lie in (0,1]");
  if (kind == LatentKind::Dcsbm && degree_log_sd < 0)
    throw ConfigError("latent config: degree_log_sd must be nonnegative");
  if (!cluster_directions.allFinite())
    throw ConfigError("latent config: cluster_directions must be finite");
}

namespace {

// Membership draw by inverse CDF; one uniform per node, nodes in order.
std::vector<int> draw_labels(const LatentConfig& cfg, std::mt19937_64& eng) {
  const int k = static_cast<int>(cfg.cluster_probs.size());
  std::vector<double> cum(k);
  double acc = 0.0;
  for (int q = 0; q < k; ++q) {
    acc += cfg.cluster_probs(q);
    cum[q] = acc;
  }
  cum[k - 1] = 1.0;
  std::vector<int> labels(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    double u = runif(eng);
    labels[i] = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (labels[i] >= k) labels[i] = k - 1;
  }
  return labels;
}

struct BlockStats {
  // Per cluster: sum and sum of squares of (capped) degrees, two largest
  // degrees, member count. Enough to evaluate mean and max of P in O(K^2).
  std::vector<double> sum, sumsq, top1, top2;
  std::vector<long> count;
};

BlockStats block_stats(const std::vector<int>& labels, const std::vector<double>& theta,
                       int k, double cap) {
  BlockStats b;
  b.sum.assign(k, 0.0);
  b.sumsq.assign(k, 0.0);
  b.top1.assign(k, 0.0);
  b.top2.assign(k, 0.0);
  b.count.assign(k, 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    double t = std::min(theta[i], cap);
    int q = labels[i];
    b.sum[q] += t;
    b.sumsq[q] += t * t;
    b.count[q] += 1;
    if (t > b.top1[q]) {
      b.top2[q] = b.top1[q];
      b.top1[q] = t;
    } else if (t > b.top2[q]) {
      b.top2[q] = t;
    }
  }
  return b;
}

struct PSummary {
  double mean_offdiag;  // of theta_i theta_j G_{c_i c_j}, i != j
  double max_entry;     // including the diagonal theta_i^2 G_{c_i c_i}
};

PSummary summarize(const BlockStats& b, const Eigen::MatrixXd& gram, long n) {
  const int k = static_cast<int>(b.sum.size());
  double total = 0.0, diag = 0.0, maxe = 0.0;
  for (int q = 0; q < k; ++q) {
    diag += b.sumsq[q] * gram(q, q);
    for (int l = 0; l < k; ++l) total += b.sum[q] * b.sum[l] * gram(q, l);
    if (b.count[q] >= 1) maxe = std::max(maxe, b.top1[q] * b.top1[q] * gram(q, q));
    if (b.count[q] >= 2) maxe = std::max(maxe, b.top1[q] * b.top2[q] * gram(q, q));
    for (int l = q + 1; l < k; ++l)
      if (b.count[q] >= 1 && b.count[l] >= 1)
        maxe = std::max(maxe, b.top1[q] * b.top1[l] * gram(q, l));
  }
  return {(total - diag) / (static_cast<double>(n) * (n - 1)), maxe};
}

Eigen::MatrixXd assemble_values(const LatentConfig& cfg, const std::vector<int>& labels,
                                const std::vector<double>& theta, double root_scale) {
  Eigen::MatrixXd v(cfg.n, cfg.d);
  for (int i = 0; i < cfg.n; ++i)
    v.row(i) = root_scale * theta[i] * cfg.cluster_directions.row(labels[i]);
  return v;
}

}  // namespace

LatentFactors build_sbm_factors(const LatentConfig& cfg) {
  cfg.validate();
  auto eng = make_engine(cfg.seed);
  auto labels = draw_labels(cfg, eng);
  const int k = static_cast<int>(cfg.cluster_directions.rows());
  Eigen::MatrixXd gram = cfg.cluster_directions * cfg.cluster_directions.transpose();
  if (gram.minCoeff() < -1e-9)
    throw ConfigError("invalid latent configuration: negative direction dot product");
  for (int q = 0; q < k; ++q)
    if (gram(q, q) > 1.0 + 1e-9)
      throw ConfigError("invalid latent configuration: direction " + std::to_string(q) +
                        " has norm above 1");

  std::vector<double> theta(cfg.n, 1.0);
  BlockStats b = block_stats(labels, theta, k, 1.0);
  PSummary ps = summarize(b, gram, cfg.n);
  double s = 1.0;
  if (cfg.target_density > 0) {
    if (ps.mean_offdiag <= 0)
      throw ConfigError("invalid latent configuration: expected density is zero");
    s = cfg.target_density / ps.mean_offdiag;
  }
  if (s * ps.max_entry > 1.0 + 1e-9)
    throw ConfigError("invalid latent configuration: some P entry exceeds 1 "
                      "(max " + std::to_string(s * ps.max_entry) + ")");

  LatentFactors f;
  f.values = assemble_values(cfg, labels, theta, std::sqrt(s));
  f.scale = s;
  f.labels = std::move(labels);
  return f;
}

LatentFactors build_dcsbm_factors(const LatentConfig& cfg) {
  cfg.validate();
  auto eng = make_engine(cfg.seed);
  auto labels = draw_labels(cfg, eng);
  const int k = static_cast<int>(cfg.cluster_directions.rows());
  Eigen::MatrixXd gram = cfg.cluster_directions * cfg.cluster_directions.transpose();
  if (gram.minCoeff() < -1e-9)
    throw ConfigError("invalid latent configuration: negative direction dot product");

  std::vector<double> theta(cfg.n);
  for (int i = 0; i < cfg.n; ++i)
    theta[i] = cfg.degree_log_sd == 0.0
                   ? std::exp(cfg.degree_log_mean)
                   : std::exp(rnorm(eng, cfg.degree_log_mean, cfg.degree_log_sd));

  // Largest admissible uniform cap on theta. The row-norm bound theta*|J_q|
  // <= 1 gives a hard ceiling; the remaining constraint (max P entry <= 1
  // after rescaling to the target density) is monotone in the cap, so a
  // bisection finds the least restrictive valid value.
  double max_norm = 0.0;
  for (int i = 0; i < cfg.n; ++i)
    max_norm = std::max(max_norm, cfg.cluster_directions.row(labels[i]).norm());
  if (max_norm <= 0)
    throw ConfigError("invalid latent configuration: zero direction in use");
  double hi = std::min(*std::max_element(theta.begin(), theta.end()), 1.0 / max_norm);

  auto valid = [&](double cap) {
    BlockStats b = block_stats(labels, theta, k, cap);
    PSummary ps = summarize(b, gram, cfg.n);
    if (ps.mean_offdiag <= 0) return std::pair<bool, double>(false, 1.0);
    double s = cfg.target_density > 0 ? cfg.target_density / ps.mean_offdiag : 1.0;
    return std::pair<bool, double>(s * ps.max_entry <= 1.0 + 1e-12, s);
  };

  double cap = hi;
  if (!valid(cap).first) {
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if (valid(mid).first)
        lo = mid;
      else
        hi = mid;
    }
    cap = lo;
    for (int it = 0; it < 500 && !valid(cap).first; ++it) cap *= 0.999;
    if (cap < 1e-12 || !valid(cap).first)
      throw ConfigError("invalid latent configuration: target density " +
                        std::to_string(cfg.target_density) +
                        " is unreachable with valid probabilities");
  }

  for (double& t : theta) t = std::min(t, cap);
  BlockStats b = block_stats(labels, theta, k, cap);
  PSummary ps = summarize(b, gram, cfg.n);
  double s = 1.0;
  if (cfg.target_density > 0) {
    if (ps.mean_offdiag <= 0)
      throw ConfigError("invalid latent configuration: expected density is zero");
    s = cfg.target_density / ps.mean_offdiag;
  }
  if (s * ps.max_entry > 1.0 + 1e-9)
    throw NumericalError("latent factor cap failed to produce valid probabilities");

  LatentFactors f;
  f.values = assemble_values(cfg, labels, theta, std::sqrt(s));
  f.scale = s;
  f.labels = std::move(labels);
  return f;
}

double expected_density(const LatentFactors& factors) {
  const long n = factors.values.rows();
  if (n < 2) return 0.0;
  Eigen::MatrixXd p = factors.values * factors.values.transpose();
  return (p.sum() - p.diagonal().sum()) / (static_cast<double>(n) * (n - 1));
}

Graph gen_rdpg(const LatentFactors& factors, std::uint64_t seed) {
  const int n = static_cast<int>(factors.values.rows());
  if (n < 2) throw ConfigError("gen_rdpg: need at least 2 nodes");
  Eigen::MatrixXd p = factors.values * factors.values.transpose();
  const double hi = p.maxCoeff(), lo = p.minCoeff();
  if (hi > 1.0 + 1e-9 || lo < -1e-9)
    throw NumericalError("gen_rdpg: invalid latent configuration, P entries span [" +
                         std::to_string(lo) + ", " + std::to_string(hi) + "]");

  auto eng = make_engine(seed);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  // Upper triangle row-major; one uniform draw per pair.
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double pij = std::clamp(p(i, j), 0.0, 1.0);
      if (runif(eng) < pij) w(i, j) = w(j, i) = 1.0;
    }
  return Graph{std::move(w)};
}

}  // namespace peerinf
