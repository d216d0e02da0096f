#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "peerinf/graph.hpp"

namespace peerinf {

// Adjacency spectral embedding. uhat = Q * sqrt(S) where S holds the d
// largest singular values of the symmetric input and Q the corresponding
// singular vectors, each sign-fixed so its largest-magnitude entry is
// positive. singular_values is sorted descending.
struct Embedding {
  Eigen::MatrixXd uhat;
  Eigen::VectorXd singular_values;

  int n() const { return static_cast<int>(uhat.rows()); }
  int d() const { return static_cast<int>(uhat.cols()); }
};

Embedding ase(const Eigen::MatrixXd& symmetric_weights, int d);
Embedding ase(const Graph& g, int d);

// Link-prediction AUC per candidate dimension, averaged over stratified
// pair-holdout folds (equal counts of edge and non-edge pairs hidden, hidden
// entries imputed as zero, pairs scored by uhat_i . uhat_j). chosen_d is the
// smallest dimension whose mean AUC is within plateau_tol of the maximum.
struct AucCurve {
  std::vector<int> dims;
  std::vector<double> auc;
  int chosen_d = 0;
};

AucCurve select_dim_auc(const Graph& g, std::vector<int> d_candidates,
                        double holdout_frac, int folds, std::uint64_t seed,
                        double plateau_tol = 0.005);

// CSV with 17 significant digits per coordinate: header u1,...,ud.
void save_embedding_csv(const Embedding& e, const std::filesystem::path& path);

// CSV of the AUC curve: header d,auc.
void save_auc_csv(const AucCurve& c, const std::filesystem::path& path);

}  // namespace peerinf
