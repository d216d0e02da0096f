#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace peerinf {

// Lloyd's algorithm with k-means++ seeding and multiple deterministic
// restarts. The run with the lowest within-cluster sum of squares wins and
// ties keep the earliest restart, so results are reproducible for a seed.
struct KmeansResult {
  std::vector<int> labels;  // size n, values in [0, k)
  Eigen::MatrixXd centers;  // k x d, row q is the mean of cluster q
  double inertia = 0.0;     // sum of squared point-to-center distances
};

KmeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    int restarts = 20);

}  // namespace peerinf
