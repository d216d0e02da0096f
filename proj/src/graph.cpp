#include "peerinf/graph.hpp"

#include <string>
#include <vector>

#include "peerinf/csv.hpp"
#include "peerinf/errors.hpp"

namespace peerinf {

double Graph::density() const {
  const int nn = n();
  if (nn < 2) return 0.0;
  long edges = 0;
  for (int i = 0; i < nn; ++i)
    for (int j = i + 1; j < nn; ++j)
      if (weights(i, j) > 0) ++edges;
  return 2.0 * static_cast<double>(edges) / (static_cast<double>(nn) * (nn - 1));
}

Graph make_graph(Eigen::MatrixXd weights) {
  if (weights.rows() != weights.cols())
    throw DataError("graph weights must be square");
  const int n = static_cast<int>(weights.rows());
  for (int i = 0; i < n; ++i) {
    if (weights(i, i) != 0.0)
      throw DataError("graph diagonal must be zero (node " + std::to_string(i) + ")");
    for (int j = i + 1; j < n; ++j) {
      if (weights(i, j) != weights(j, i))
        throw DataError("graph weights must be symmetric (" + std::to_string(i) +
                        "," + std::to_string(j) + ")");
      if (weights(i, j) < 0 || !std::isfinite(weights(i, j)))
        throw DataError("graph weights must be finite and nonnegative (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }
  return Graph{std::move(weights)};
}

void save_graph_edges(const Graph& g, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  const int n = g.n();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (g.weights(i, j) != 0.0)
        rows.push_back({std::to_string(i), std::to_string(j), fmt_double(g.weights(i, j))});
  write_csv(path, {"src", "dst", "weight"}, rows);
}

Graph load_graph_edges(const std::filesystem::path& path, int n) {
  CsvTable t = read_csv(path);
  require_header(t, {"src", "dst", "weight"}, path.string());
  long max_node = -1;
  struct Edge { int src, dst; double w; };
  std::vector<Edge> edges;
  edges.reserve(t.rows.size());
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path.string() + " row " + std::to_string(r + 2);
    if (t.rows[r].size() != 3) throw DataError(where + ": expected 3 fields");
    long src = parse_long(t.rows[r][0], where);
    long dst = parse_long(t.rows[r][1], where);
    double w = parse_double(t.rows[r][2], where);
    if (src < 0 || dst < 0) throw DataError(where + ": negative node index");
    if (src >= dst) throw DataError(where + ": edges must satisfy src < dst");
    if (w < 0 || !std::isfinite(w)) throw DataError(where + ": invalid weight");
    max_node = std::max(max_node, dst);
    edges.push_back({static_cast<int>(src), static_cast<int>(dst), w});
  }
  const int size = n >= 0 ? n : static_cast<int>(max_node + 1);
  if (max_node >= size)
    throw DataError(path.string() + ": node index " + std::to_string(max_node) +
                    " exceeds graph size " + std::to_string(size));
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(size, size);
  for (const auto& e : edges) {
    w(e.src, e.dst) = e.w;
    w(e.dst, e.src) = e.w;
  }
  return Graph{std::move(w)};
}

void save_dense_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row;
    row.reserve(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(fmt_double(m(i, j)));
    rows.push_back(std::move(row));
  }
  write_csv(path, {}, rows);
}

Eigen::MatrixXd row_normalized(const Graph& g) {
  const int n = g.n();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double degree = g.weights.row(i).sum();
    if (degree > 0.0) l.row(i) = g.weights.row(i) / degree;
  }
  return l;
}

Eigen::MatrixXd load_dense_csv(const std::filesystem::path& path) {
  CsvTable t = read_csv(path, /*has_header=*/false);
  const size_t nr = t.rows.size();
  if (nr == 0) throw DataError(path.string() + ": empty matrix");
  const size_t nc = t.rows[0].size();
  Eigen::MatrixXd m(nr, nc);
  for (size_t i = 0; i < nr; ++i) {
    if (t.rows[i].size() != nc)
      throw DataError(path.string() + " row " + std::to_string(i + 1) + ": ragged matrix");
    for (size_t j = 0; j < nc; ++j)
      m(i, j) = parse_double(t.rows[i][j], path.string() + " row " + std::to_string(i + 1));
  }
  return m;
}

}  // namespace peerinf
