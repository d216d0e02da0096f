#pragma once

#include <Eigen/Dense>
#include <filesystem>

namespace peerinf {

// Undirected weighted graph stored dense. Invariants (checked by
// make_graph): square, symmetric, nonnegative, zero diagonal.
struct Graph {
  Eigen::MatrixXd weights;

  int n() const { return static_cast<int>(weights.rows()); }
  double density() const;  // mean off-diagonal weight of the binarized graph
};

Graph make_graph(Eigen::MatrixXd weights);

// Row-stochastic neighbor-averaging matrix L = D^-1 A; rows of isolated
// nodes are zero instead of dividing by zero.
Eigen::MatrixXd row_normalized(const Graph& g);

// Sparse edge-list CSV: header src,dst,weight; one row per undirected edge
// with src < dst; weights round-trip bit-exactly. Nodes are 0-based. An
// isolated node with the largest index is not representable in this format;
// pass n to load_graph_edges when it is known externally.
void save_graph_edges(const Graph& g, const std::filesystem::path& path);
Graph load_graph_edges(const std::filesystem::path& path, int n = -1);

// Dense CSV: n rows of n comma-separated weights, no header.
void save_dense_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path);
Eigen::MatrixXd load_dense_csv(const std::filesystem::path& path);

}  // namespace peerinf
