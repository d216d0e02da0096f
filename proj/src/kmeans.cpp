#include "peerinf/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "peerinf/errors.hpp"
#include "peerinf/rng.hpp"

namespace peerinf {

namespace {

struct RunOutcome {
  bool ok = false;  // false when a cluster emptied out mid-run
  std::vector<int> labels;
  Eigen::MatrixXd centers;
  double sse = 0.0;
};

RunOutcome lloyd_run(const Eigen::MatrixXd& x, int k, std::mt19937_64& eng) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());

  // k-means++ seeding; zero-distance points carry no weight, so the chosen
  // centers are always distinct rows.
  Eigen::MatrixXd centers(k, d);
  std::vector<double> d2(static_cast<size_t>(n));
  centers.row(0) = x.row(rindex(eng, n));
  for (int i = 0; i < n; ++i)
    d2[static_cast<size_t>(i)] = (x.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) return {};
    const double u = runif(eng) * total;
    int pick = n - 1;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += d2[static_cast<size_t>(i)];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    centers.row(c) = x.row(pick);
    for (int i = 0; i < n; ++i)
      d2[static_cast<size_t>(i)] =
          std::min(d2[static_cast<size_t>(i)], (x.row(i) - centers.row(c)).squaredNorm());
  }

  std::vector<int> labels(static_cast<size_t>(n), -1);
  std::vector<int> counts(static_cast<size_t>(k));
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int arg = 0;
      double best = (x.row(i) - centers.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        double dist = (x.row(i) - centers.row(c)).squaredNorm();
        if (dist < best) {
          best = dist;
          arg = c;
        }
      }
      if (labels[static_cast<size_t>(i)] != arg) {
        labels[static_cast<size_t>(i)] = arg;
        changed = true;
      }
    }
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) counts[static_cast<size_t>(labels[static_cast<size_t>(i)])]++;
    if (std::find(counts.begin(), counts.end(), 0) != counts.end()) return {};
    centers.setZero();
    for (int i = 0; i < n; ++i) centers.row(labels[static_cast<size_t>(i)]) += x.row(i);
    for (int c = 0; c < k; ++c) centers.row(c) /= counts[static_cast<size_t>(c)];
    if (!changed) break;
  }

  RunOutcome out;
  out.ok = true;
  out.labels = std::move(labels);
  out.centers = std::move(centers);
  for (int i = 0; i < n; ++i)
    out.sse += (x.row(i) - out.centers.row(out.labels[static_cast<size_t>(i)])).squaredNorm();
  return out;
}

int count_distinct_rows(const Eigen::MatrixXd& x) {
  const int n = static_cast<int>(x.rows());
  std::vector<int> ord(static_cast<size_t>(n));
  std::iota(ord.begin(), ord.end(), 0);
  auto row_less = [&](int a, int b) {
    for (int j = 0; j < x.cols(); ++j) {
      if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
    }
    return false;
  };
  std::sort(ord.begin(), ord.end(), row_less);
  int distinct = n > 0 ? 1 : 0;
  for (int i = 1; i < n; ++i)
    if (row_less(ord[static_cast<size_t>(i - 1)], ord[static_cast<size_t>(i)])) ++distinct;
  return distinct;
}

}  // namespace

KmeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts) {
  const int n = static_cast<int>(points.rows());
  if (k < 1) throw ConfigError("kmeans: k must be positive, got " + std::to_string(k));
  if (k > n)
    throw ConfigError("kmeans: k = " + std::to_string(k) + " exceeds the number of points " +
                      std::to_string(n));
  if (restarts < 1) throw ConfigError("kmeans: restarts must be positive");
  if (!points.allFinite()) throw DataError("kmeans: points must be finite");
  if (count_distinct_rows(points) < k)
    throw DataError("kmeans: k = " + std::to_string(k) +
                    " exceeds the number of distinct points");

  RunOutcome best;
  int extra = 0;
  for (int r = 0; r < restarts; ++r) {
    std::uint64_t attempt_seed = sub_seed(seed, static_cast<std::uint64_t>(r));
    RunOutcome out;
    for (;;) {
      auto eng = make_engine(attempt_seed);
      out = lloyd_run(points, k, eng);
      if (out.ok) break;
      if (extra == 10)
        throw NumericalError("kmeans: restarts kept producing empty clusters");
      ++extra;
      attempt_seed = sub_seed(seed, 10000 + static_cast<std::uint64_t>(extra));
    }
    if (!best.ok || out.sse < best.sse) best = std::move(out);
  }

  KmeansResult result;
  result.labels = std::move(best.labels);
  result.centers = std::move(best.centers);
  result.inertia = best.sse;
  return result;
}

}  // namespace peerinf
