#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "peerinf/csv.hpp"
#include "peerinf/embed.hpp"
#include "peerinf/errors.hpp"
#include "peerinf/graph.hpp"
#include "peerinf/mecov.hpp"
#include "peerinf/netgen.hpp"
#include "peerinf/rng.hpp"

using namespace peerinf;

namespace {

Embedding rows_embedding(const Eigen::MatrixXd& uhat) {
  Embedding e;
  e.uhat = uhat;
  e.singular_values = Eigen::VectorXd::Ones(uhat.cols());
  return e;
}

// Orthogonal rotation r minimizing ||x r - y||_F.
Eigen::MatrixXd procrustes(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x.transpose() * y,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

// Reference plug-in evaluated on explicit positions with plain loops. Used
// as the oracle both for the true-position covariance and as a dual route
// for the estimator itself.
std::vector<Eigen::MatrixXd> reference_plugin(const Eigen::MatrixXd& pos) {
  const int n = static_cast<int>(pos.rows());
  const int d = static_cast<int>(pos.cols());
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < n; ++j) f += pos.row(j).transpose() * pos.row(j);
  f /= n;
  Eigen::MatrixXd finv = f.inverse();
  std::vector<Eigen::MatrixXd> out;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd inner = Eigen::MatrixXd::Zero(d, d);
    for (int j = 0; j < n; ++j) {
      double c = pos.row(j).dot(pos.row(i));
      c = std::min(1.0, std::max(0.0, c));
      inner += c * (1.0 - c) * pos.row(j).transpose() * pos.row(j);
    }
    inner /= n;
    out.push_back((finv * inner * finv) / n);
  }
  return out;
}

LatentConfig four_block_config(int n, std::uint64_t seed) {
  LatentConfig cfg;
  cfg.n = n;
  cfg.d = 2;
  cfg.kind = LatentKind::Sbm;
  cfg.seed = seed;
  cfg.cluster_directions.resize(4, 2);
  cfg.cluster_directions << 0.7, 0.2, 0.1, 0.6, 0.2, 0.2, 0.5, 0.5;
  cfg.cluster_probs = Eigen::VectorXd::Constant(4, 0.25);
  return cfg;
}

}  // namespace

TEST_CASE("identical rows reduce to the closed form Bernoulli variance") {
  const int n = 50;
  const double p = 0.3;
  Eigen::MatrixXd uhat = Eigen::MatrixXd::Constant(n, 1, std::sqrt(p));
  NodeCovariances cov = delta_rdpg(rows_embedding(uhat));

  REQUIRE(cov.n() == n);
  CHECK(cov.variant == "rdpg-plugin");
  // With every row equal to sqrt(p) the plug-in collapses to (1-p)/n, which
  // is also the first-order variance of the scaled leading eigenvector of an
  // Erdos-Renyi adjacency matrix, so the normalization is pinned down.
  for (int i = 0; i < n; ++i) {
    REQUIRE(cov.per_node[static_cast<size_t>(i)].rows() == 1);
    CHECK(cov.per_node[static_cast<size_t>(i)](0, 0) ==
          doctest::Approx((1.0 - p) / n).epsilon(1e-12));
  }
}

TEST_CASE("unit and clamped dot products give zero covariance") {
  Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(40, 1, 1.0);
  for (const auto& m : delta_rdpg(rows_embedding(ones)).per_node)
    CHECK(std::fabs(m(0, 0)) <= 1e-15);

  // Dots of 1.44 must clamp to 1 rather than produce negative variances.
  Eigen::MatrixXd big = Eigen::MatrixXd::Constant(40, 1, 1.2);
  for (const auto& m : delta_rdpg(rows_embedding(big)).per_node)
    CHECK(std::fabs(m(0, 0)) <= 1e-15);
}

TEST_CASE("plug-in matches a plain-loop reference on mixed-sign rows") {
  Eigen::MatrixXd uhat(30, 1);
  for (int i = 0; i < 30; ++i) uhat(i, 0) = (i % 3 == 0) ? -0.4 : 0.7;
  NodeCovariances cov = delta_rdpg(rows_embedding(uhat));
  auto ref = reference_plugin(uhat);
  for (int i = 0; i < 30; ++i)
    CHECK((cov.per_node[static_cast<size_t>(i)] - ref[static_cast<size_t>(i)]).norm() < 1e-14);
}

TEST_CASE("plug-in error against the true-position oracle decreases with n") {
  LatentConfig cfg;
  cfg.d = 2;
  cfg.kind = LatentKind::Dcsbm;
  cfg.cluster_directions.resize(2, 2);
  cfg.cluster_directions << 0.5, 0.1, 0.1, 0.5;
  cfg.cluster_probs = Eigen::VectorXd::Constant(2, 0.5);
  cfg.degree_log_sd = 0.5;
  cfg.target_density = 0.20;

  std::vector<double> err;
  for (int n : {100, 200, 400}) {
    double total = 0.0;
    for (int s = 0; s < 3; ++s) {
      std::uint64_t seed = sub_seed(505, static_cast<std::uint64_t>(n * 10 + s));
      cfg.n = n;
      cfg.seed = seed;
      LatentFactors fac = build_dcsbm_factors(cfg);
      Graph g = gen_rdpg(fac, sub_seed(seed, 1));
      Embedding emb = ase(g, 2);

      Eigen::MatrixXd r = procrustes(fac.values, emb.uhat);
      auto truth = reference_plugin(fac.values);
      NodeCovariances est = delta_rdpg(emb);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        Eigen::MatrixXd oracle = r.transpose() * truth[static_cast<size_t>(i)] * r;
        acc += (est.per_node[static_cast<size_t>(i)] - oracle).norm();
      }
      total += acc / n;
    }
    err.push_back(total / 3.0);
  }
  CHECK(err[0] > err[1]);
  CHECK(err[1] > err[2]);
}

TEST_CASE("single cluster delta matches the plug-in on identical rows") {
  LatentConfig cfg;
  cfg.n = 300;
  cfg.d = 1;
  cfg.kind = LatentKind::Sbm;
  cfg.seed = 60;
  cfg.cluster_directions.resize(1, 1);
  cfg.cluster_directions << 0.35;
  cfg.cluster_probs = Eigen::VectorXd::Constant(1, 1.0);

  LatentFactors fac = build_sbm_factors(cfg);
  Graph g = gen_rdpg(fac, 61);
  Embedding emb = ase(g, 1);

  NodeCovariances sbm = delta_sbm(emb, 1, 62);
  CHECK(sbm.variant == "sbm-cluster");
  REQUIRE(sbm.cluster_assignments.has_value());

  double center = emb.uhat.col(0).mean();
  Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(300, 1, center);
  NodeCovariances rdpg = delta_rdpg(rows_embedding(flat));
  for (int i = 0; i < 300; ++i)
    CHECK((sbm.per_node[static_cast<size_t>(i)] - rdpg.per_node[static_cast<size_t>(i)]).norm() <
          1e-8);
}

TEST_CASE("cluster covariances with duplicate centers coincide") {
  Eigen::MatrixXd centers(2, 1);
  centers << 0.55, 0.55;
  Eigen::VectorXd props(2);
  props << 0.4, 0.6;
  auto covs = sbm_cluster_covariances(centers, props, 100);
  REQUIRE(covs.size() == 2);
  CHECK((covs[0] - covs[1]).norm() == 0.0);
}

TEST_CASE("collinear centers and collinear embeddings are rejected") {
  Eigen::MatrixXd centers(2, 2);
  centers << 0.6, 0.3, 0.4, 0.2;  // second row parallel to the first
  Eigen::VectorXd props(2);
  props << 0.5, 0.5;
  CHECK_THROWS_AS(sbm_cluster_covariances(centers, props, 50), NumericalError);

  auto eng = make_engine(8);
  Eigen::MatrixXd uhat(40, 2);
  for (int i = 0; i < 40; ++i) {
    uhat(i, 0) = 0.3 + 0.05 * rnorm(eng);
    uhat(i, 1) = 2.0 * uhat(i, 0);
  }
  CHECK_THROWS_AS(delta_rdpg(rows_embedding(uhat)), NumericalError);
}

TEST_CASE("four community covariances match the exact block formula") {
  const int n = 800;
  const double quarter = 0.25;

  // Exact per-community covariance evaluated with the true centers.
  Eigen::MatrixXd b = four_block_config(n, 0).cluster_directions;
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2, 2);
  for (int k = 0; k < 4; ++k) f += quarter * b.row(k).transpose() * b.row(k);
  Eigen::MatrixXd finv = f.inverse();
  std::vector<Eigen::MatrixXd> sigma_true;
  for (int q = 0; q < 4; ++q) {
    Eigen::MatrixXd inner = Eigen::MatrixXd::Zero(2, 2);
    for (int k = 0; k < 4; ++k) {
      double c = b.row(q).dot(b.row(k));
      inner += quarter * (c - c * c) * b.row(k).transpose() * b.row(k);
    }
    sigma_true.push_back(finv * inner * finv / n);
  }

  std::vector<std::vector<double>> rel_err(4);
  std::vector<double> node_rel;
  for (int s = 0; s < 20; ++s) {
    std::uint64_t seed = sub_seed(7100, static_cast<std::uint64_t>(s));
    LatentFactors fac = build_sbm_factors(four_block_config(n, seed));
    Graph g = gen_rdpg(fac, sub_seed(seed, 1));
    Embedding emb = ase(g, 2);
    NodeCovariances est = delta_sbm(emb, 4, sub_seed(seed, 2));

    // Align the true centers with the embedding frame, then match each true
    // community to the nearest k-means cluster.
    Eigen::MatrixXd r = procrustes(fac.values, emb.uhat);
    Eigen::MatrixXd rotated = b * r;
    const auto& labels = *est.cluster_assignments;
    Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(4, 2);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
    for (int i = 0; i < n; ++i) {
      centers.row(labels[static_cast<size_t>(i)]) += emb.uhat.row(i);
      counts(labels[static_cast<size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < 4; ++c) centers.row(c) /= counts(c);
    int match[4];
    for (int q = 0; q < 4; ++q) {
      double best = 1e300;
      for (int c = 0; c < 4; ++c) {
        double dist = (centers.row(c) - rotated.row(q)).norm();
        if (dist < best) {
          best = dist;
          match[q] = c;
        }
      }
    }
    REQUIRE(std::set<int>(match, match + 4).size() == 4);

    for (int q = 0; q < 4; ++q) {
      Eigen::MatrixXd oracle = r.transpose() * sigma_true[static_cast<size_t>(q)] * r;
      int node = -1;  // any node assigned to the matched cluster
      for (int i = 0; i < n && node < 0; ++i)
        if (labels[static_cast<size_t>(i)] == match[q]) node = i;
      REQUIRE(node >= 0);
      rel_err[static_cast<size_t>(q)].push_back(
          (est.per_node[static_cast<size_t>(node)] - oracle).norm() / oracle.norm());
    }

    // Node-wise agreement between the two variants.
    NodeCovariances rdpg = delta_rdpg(emb);
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += (est.per_node[static_cast<size_t>(i)] - rdpg.per_node[static_cast<size_t>(i)]).norm() /
             rdpg.per_node[static_cast<size_t>(i)].norm();
    node_rel.push_back(acc / n);
  }

  for (int q = 0; q < 4; ++q) {
    auto& v = rel_err[static_cast<size_t>(q)];
    std::sort(v.begin(), v.end());
    double median = 0.5 * (v[9] + v[10]);
    CHECK(median <= 0.1);
  }
  std::sort(node_rel.begin(), node_rel.end());
  CHECK(0.5 * (node_rel[9] + node_rel[10]) <= 0.1);
}

TEST_CASE("node covariances are symmetric and positive semidefinite") {
  LatentFactors fac = build_sbm_factors(four_block_config(300, 91));
  Graph g = gen_rdpg(fac, 92);
  Embedding emb = ase(g, 2);

  for (const auto& cov : {delta_rdpg(emb), delta_sbm(emb, 4, 93)}) {
    for (const auto& m : cov.per_node) {
      CHECK((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
      CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    }
    Eigen::MatrixXd omega = assemble_omega(cov, 3);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("omega assembly places the covariance sum in the latent block") {
  NodeCovariances cov;
  cov.variant = "rdpg-plugin";
  for (int i = 0; i < 3; ++i) cov.per_node.push_back(Eigen::MatrixXd::Identity(2, 2) / 3.0);

  Eigen::MatrixXd omega = assemble_omega(cov, 2);
  REQUIRE(omega.rows() == 4);
  REQUIRE(omega.cols() == 4);
  CHECK((omega.topLeftCorner(2, 2) - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
        1e-15);
  CHECK(omega.bottomRows(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(omega.rightCols(2).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd part = assemble_omega(cov, 0, std::vector<int>{0, 2});
  CHECK((part - Eigen::MatrixXd::Identity(2, 2) * (2.0 / 3.0)).cwiseAbs().maxCoeff() < 1e-15);

  NodeCovariances zero;
  zero.variant = "rdpg-plugin";
  for (int i = 0; i < 4; ++i) zero.per_node.push_back(Eigen::MatrixXd::Zero(2, 2));
  CHECK(assemble_omega(zero, 1).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(assemble_omega(cov, -1), ConfigError);
  CHECK_THROWS_AS(assemble_omega(cov, 0, std::vector<int>{5}), DataError);
  NodeCovariances empty;
  CHECK_THROWS_AS(assemble_omega(empty, 0), DataError);
}

TEST_CASE("node covariance export writes every entry") {
  NodeCovariances cov;
  cov.variant = "rdpg-plugin";
  Eigen::MatrixXd m(2, 2);
  m << 0.1, 0.25, 0.25, 1.0 / 3.0;
  cov.per_node.push_back(m);
  cov.per_node.push_back(2.0 * m);

  std::filesystem::path dir =
      std::filesystem::temp_directory_path() / ("peerinf_mecov_" + std::to_string(getpid()));
  std::filesystem::create_directories(dir);
  std::filesystem::path file = dir / "cov.csv";
  save_node_covariances_csv(cov, file);

  CsvTable t = read_csv(file);
  REQUIRE(t.header == std::vector<std::string>({"node", "row", "col", "value"}));
  REQUIRE(t.rows.size() == 8);
  for (const auto& row : t.rows) {
    int node = static_cast<int>(parse_long(row[0], "node"));
    int r = static_cast<int>(parse_long(row[1], "row"));
    int c = static_cast<int>(parse_long(row[2], "col"));
    double v = parse_double(row[3], "value");
    CHECK(v == cov.per_node[static_cast<size_t>(node)](r, c));
  }
  std::filesystem::remove_all(dir);
}
