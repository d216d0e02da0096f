#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "peerinf/errors.hpp"
#include "peerinf/netgen.hpp"
#include "peerinf/rng.hpp"

using namespace peerinf;

namespace {

Eigen::MatrixXd two_block_directions() {
  Eigen::MatrixXd j(2, 2);
  j << 0.5, 0.1, 0.1, 0.5;
  return j;
}

LatentConfig sbm_cfg(int n, std::uint64_t seed) {
  LatentConfig cfg;
  cfg.n = n;
  cfg.d = 2;
  cfg.kind = LatentKind::Sbm;
  cfg.cluster_directions = two_block_directions();
  cfg.cluster_probs = Eigen::Vector2d(0.5, 0.5);
  cfg.seed = seed;
  return cfg;
}

LatentConfig dcsbm_cfg(int n, double density, std::uint64_t seed) {
  LatentConfig cfg = sbm_cfg(n, seed);
  cfg.kind = LatentKind::Dcsbm;
  cfg.degree_log_mean = 0.0;
  cfg.degree_log_sd = 0.5;
  cfg.target_density = density;
  return cfg;
}

}  // namespace

// Oracle: with directions [[0.5,0.1],[0.1,0.5]] the only possible dot
// products are 0.5^2+0.1^2 = 0.26 (same block) and 2*0.5*0.1 = 0.10
// (cross block). Frozen by hand.
TEST_CASE("sbm factors reproduce exact block dot products") {
  auto f = build_sbm_factors(sbm_cfg(40, 11));
  CHECK(f.scale == 1.0);
  CHECK(static_cast<int>(f.labels.size()) == 40);
  Eigen::MatrixXd p = f.values * f.values.transpose();
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) {
      double expect = (f.labels[i] == f.labels[j]) ? 0.26 : 0.10;
      CHECK(p(i, j) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("degenerate cluster probs put every node in block one") {
  auto cfg = sbm_cfg(25, 3);
  cfg.cluster_probs = Eigen::Vector2d(1.0, 0.0);
  auto f = build_sbm_factors(cfg);
  for (int i = 0; i < 25; ++i) {
    CHECK(f.labels[i] == 0);
    CHECK(f.values(i, 0) == doctest::Approx(0.5));
    CHECK(f.values(i, 1) == doctest::Approx(0.1));
  }
}

TEST_CASE("density rescaling hits the target mean exactly") {
  for (double target : {0.05, 0.20, 0.40}) {
    auto f = build_dcsbm_factors(dcsbm_cfg(200, target, 17));
    // Oracle: recompute mean offdiagonal P directly from the returned rows.
    Eigen::MatrixXd p = f.values * f.values.transpose();
    double sum = p.sum() - p.diagonal().sum();
    double mean = sum / (200.0 * 199.0);
    CHECK(mean == doctest::Approx(target).epsilon(1e-9));
    CHECK(expected_density(f) == doctest::Approx(target).epsilon(1e-9));
  }
}

TEST_CASE("dcsbm factors always describe valid probabilities") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    for (double density : {0.05, 0.40}) {
      auto cfg = dcsbm_cfg(150, density, seed);
      SUBCASE("wide degree tail") { cfg.degree_log_sd = 1.0; }
      auto f = build_dcsbm_factors(cfg);
      Eigen::MatrixXd p = f.values * f.values.transpose();
      CHECK(p.maxCoeff() <= 1.0 + 1e-9);
      CHECK(p.minCoeff() >= -1e-9);
      double max_row_norm = f.values.rowwise().norm().maxCoeff();
      CHECK(max_row_norm <= std::sqrt(f.scale) + 1e-9);
    }
  }
}

TEST_CASE("dcsbm with unit degrees collapses to the sbm") {
  auto cfg = dcsbm_cfg(60, 0.0, 5);
  cfg.degree_log_sd = 0.0;
  cfg.target_density = 0.0;  // no rescale: rows must match J exactly
  auto f = build_dcsbm_factors(cfg);
  auto g = build_sbm_factors(sbm_cfg(60, 5));
  // Same seed must yield the same memberships, hence identical rows.
  CHECK(f.labels == g.labels);
  CHECK((f.values - g.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("generated graphs are simple, symmetric and binary") {
  auto f = build_dcsbm_factors(dcsbm_cfg(80, 0.20, 23));
  Graph g = gen_rdpg(f, 99);
  CHECK(g.n() == 80);
  for (int i = 0; i < g.n(); ++i) {
    CHECK(g.weights(i, i) == 0.0);
    for (int j = i + 1; j < g.n(); ++j) {
      CHECK(g.weights(i, j) == g.weights(j, i));
      bool binary = g.weights(i, j) == 0.0 || g.weights(i, j) == 1.0;
      CHECK(binary);
    }
  }
}

TEST_CASE("same seed reproduces the graph bit for bit") {
  auto f = build_dcsbm_factors(dcsbm_cfg(60, 0.20, 7));
  Graph a = gen_rdpg(f, 1234);
  Graph b = gen_rdpg(f, 1234);
  CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() == 0.0);
  Graph c = gen_rdpg(f, 1235);
  CHECK((a.weights - c.weights).cwiseAbs().maxCoeff() > 0.0);
}

// Property: empirical edge frequency matches P_ij. With a single direction
// (0.6, 0.3), P_ij = 0.45 for every pair; 4 binomial SEs over 10000 seeds
// is 4*sqrt(0.45*0.55/10000) = 0.0199.
TEST_CASE("edge frequency tracks the dot product probability") {
  LatentConfig cfg;
  cfg.n = 6;
  cfg.d = 2;
  cfg.kind = LatentKind::Sbm;
  cfg.cluster_directions = Eigen::MatrixXd(1, 2);
  cfg.cluster_directions << 0.6, 0.3;
  cfg.cluster_probs = Eigen::VectorXd::Ones(1);
  cfg.seed = 2;
  auto f = build_sbm_factors(cfg);
  int hits = 0;
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) {
    Graph g = gen_rdpg(f, sub_seed(777, r));
    if (g.weights(0, 1) != 0.0) ++hits;
  }
  double freq = static_cast<double>(hits) / reps;
  CHECK(freq == doctest::Approx(0.45).epsilon(0.0443));  // 0.0199/0.45 relative
  CHECK(std::fabs(freq - 0.45) <= 0.0199);
}

TEST_CASE("invalid latent configurations are rejected") {
  SUBCASE("probs must sum to one") {
    auto cfg = sbm_cfg(10, 1);
    cfg.cluster_probs = Eigen::Vector2d(0.7, 0.7);
    CHECK_THROWS_AS(build_sbm_factors(cfg), ConfigError);
  }
  SUBCASE("direction dot products above one") {
    auto cfg = sbm_cfg(10, 1);
    cfg.cluster_directions = Eigen::MatrixXd(1, 2);
    cfg.cluster_directions << 0.9, 0.9;  // self dot 1.62
    cfg.cluster_probs = Eigen::VectorXd::Ones(1);
    CHECK_THROWS_AS(build_sbm_factors(cfg), ConfigError);
  }
  SUBCASE("target density outside (0,1]") {
    auto cfg = dcsbm_cfg(10, 1.5, 1);
    CHECK_THROWS_AS(build_dcsbm_factors(cfg), ConfigError);
  }
  SUBCASE("dimension mismatch") {
    auto cfg = sbm_cfg(10, 1);
    cfg.d = 3;
    CHECK_THROWS_AS(build_sbm_factors(cfg), ConfigError);
  }
  SUBCASE("gen_rdpg rejects invalid factor products") {
    LatentFactors bad;
    bad.values = Eigen::MatrixXd(3, 2);
    bad.values << 1.2, 0.0, 1.2, 0.0, 0.1, 0.1;  // pair (0,1) has P=1.44
    CHECK_THROWS_AS(gen_rdpg(bad, 1), NumericalError);
  }
}
