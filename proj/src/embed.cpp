#include "peerinf/embed.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "peerinf/csv.hpp"
#include "peerinf/errors.hpp"
#include "peerinf/rng.hpp"

namespace peerinf {

namespace {

struct EigPair {
  double value;
  Eigen::VectorXd vector;
};

// |lambda| descending; positive first on magnitude ties.
bool magnitude_order(const EigPair& a, const EigPair& b) {
  double ma = std::fabs(a.value), mb = std::fabs(b.value);
  if (ma != mb) return ma > mb;
  return a.value > b.value;
}

std::vector<EigPair> full_topk(const Eigen::MatrixXd& s, int k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success)
    throw NumericalError("ase: eigendecomposition failed to converge");
  const int n = static_cast<int>(s.rows());
  std::vector<EigPair> pairs(n);
  for (int i = 0; i < n; ++i) pairs[i] = {es.eigenvalues()(i), es.eigenvectors().col(i)};
  std::sort(pairs.begin(), pairs.end(), magnitude_order);
  pairs.resize(k);
  return pairs;
}

// Block subspace iteration on S itself: converges to the invariant subspace
// of the b largest-magnitude eigenvalues, which is exactly the set ASE
// needs. Deterministic fixed initial block; exits on a residual check so a
// premature Ritz plateau cannot return inaccurate pairs.
bool subspace_topk(const Eigen::MatrixXd& s, int k, std::vector<EigPair>& out) {
  const int n = static_cast<int>(s.rows());
  const int b = std::min(n, k + 8);

  Eigen::MatrixXd q(n, b);
  std::uint64_t ctr = 0x5EEDF00Dull;
  for (int j = 0; j < b; ++j)
    for (int i = 0; i < n; ++i)
      q(i, j) = 2.0 * (static_cast<double>(mix64(ctr++) >> 11) * 0x1p-53) - 1.0;
  {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(q);
    q = qr.householderQ() * Eigen::MatrixXd::Identity(n, b);
  }

  const double scale = std::max(1.0, s.cwiseAbs().rowwise().sum().maxCoeff());
  const double tol = 1e-11 * scale;
  const int max_iters = 2000;

  for (int it = 1; it <= max_iters; ++it) {
    Eigen::MatrixXd z = s * q;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
    q = qr.householderQ() * Eigen::MatrixXd::Identity(n, b);

    if (it % 10 != 0 && it != max_iters) continue;

    Eigen::MatrixXd t = q.transpose() * (s * q);
    t = 0.5 * (t + t.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    if (es.info() != Eigen::Success) return false;
    std::vector<EigPair> ritz(b);
    Eigen::MatrixXd vecs = q * es.eigenvectors();
    for (int i = 0; i < b; ++i) ritz[i] = {es.eigenvalues()(i), vecs.col(i)};
    std::sort(ritz.begin(), ritz.end(), magnitude_order);

    bool converged = true;
    for (int i = 0; i < k && converged; ++i) {
      double res = (s * ritz[i].vector - ritz[i].value * ritz[i].vector).norm();
      if (res > tol) converged = false;
    }
    if (converged) {
      ritz.resize(k);
      out = std::move(ritz);
      return true;
    }
  }
  return false;
}

}  // namespace

Embedding ase(const Eigen::MatrixXd& symmetric_weights, int d) {
  const Eigen::MatrixXd& s = symmetric_weights;
  const int n = static_cast<int>(s.rows());
  if (s.cols() != n) throw DataError("ase: input matrix must be square");
  if (!s.allFinite()) throw DataError("ase: input matrix must be finite");
  if (d < 1 || d > n)
    throw ConfigError("ase: d must lie in [1, n], got " + std::to_string(d));
  const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * (1.0 + s.cwiseAbs().maxCoeff()))
    throw DataError("ase: input matrix must be symmetric");

  std::vector<EigPair> top;
  const bool small = n <= 256 || 3 * (d + 8) >= n;
  if (small || !subspace_topk(s, d, top)) top = full_topk(s, d);

  if (std::fabs(top[static_cast<size_t>(d) - 1].value) < 1e-12)
    throw NumericalError("ase: rank deficient input, singular value " + std::to_string(d) +
                         " is below 1e-12");

  Embedding e;
  e.uhat.resize(n, d);
  e.singular_values.resize(d);
  for (int c = 0; c < d; ++c) {
    Eigen::VectorXd v = top[c].vector;
    int arg = 0;
    for (int i = 1; i < n; ++i)
      if (std::fabs(v(i)) > std::fabs(v(arg))) arg = i;
    if (v(arg) < 0) v = -v;
    const double sv = std::fabs(top[c].value);
    e.singular_values(c) = sv;
    e.uhat.col(c) = v * std::sqrt(sv);
  }
  return e;
}

Embedding ase(const Graph& g, int d) { return ase(g.weights, d); }

namespace {

// Mann-Whitney AUC with average ranks on ties. labels: 1 = edge.
double auc_from_scores(const std::vector<double>& scores, const std::vector<int>& labels) {
  const size_t m = scores.size();
  std::vector<size_t> idx(m);
  for (size_t i = 0; i < m; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(m);
  size_t i = 0;
  while (i < m) {
    size_t j = i;
    while (j + 1 < m && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t t = i; t <= j; ++t) rank[idx[t]] = avg;
    i = j + 1;
  }
  double rank_pos = 0.0;
  long n_pos = 0;
  for (size_t t = 0; t < m; ++t)
    if (labels[t] == 1) {
      rank_pos += rank[t];
      ++n_pos;
    }
  long n_neg = static_cast<long>(m) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("auc: all held-out labels identical");
  return (rank_pos - 0.5 * n_pos * (n_pos + 1.0)) / (static_cast<double>(n_pos) * n_neg);
}

// First k elements of a partial Fisher-Yates shuffle.
template <typename T>
std::vector<T> sample_k(std::vector<T> pool, size_t k, std::mt19937_64& eng) {
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(runif(eng) * (pool.size() - i));
    if (j >= pool.size()) j = pool.size() - 1;
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

AucCurve select_dim_auc(const Graph& g, std::vector<int> d_candidates,
                        double holdout_frac, int folds, std::uint64_t seed,
                        double plateau_tol) {
  const int n = g.n();
  if (d_candidates.empty()) throw ConfigError("select_dim_auc: no candidate dimensions");
  std::sort(d_candidates.begin(), d_candidates.end());
  d_candidates.erase(std::unique(d_candidates.begin(), d_candidates.end()), d_candidates.end());
  if (d_candidates.front() < 1 || d_candidates.back() > n)
    throw ConfigError("select_dim_auc: candidate dimensions must lie in [1, n]");
  if (!(holdout_frac > 0.0 && holdout_frac < 1.0))
    throw ConfigError("select_dim_auc: holdout_frac must lie in (0,1)");
  if (folds < 1) throw ConfigError("select_dim_auc: folds must be positive");
  if (plateau_tol < 0) throw ConfigError("select_dim_auc: plateau_tol must be nonnegative");

  using Pair = std::pair<int, int>;
  std::vector<Pair> edges, nons;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      (g.weights(i, j) > 0 ? edges : nons).push_back({i, j});

  const double npairs = 0.5 * static_cast<double>(n) * (n - 1);
  size_t per_class = static_cast<size_t>(holdout_frac * npairs / 2.0);
  per_class = std::min({per_class, edges.size(), nons.size()});
  if (per_class == 0)
    throw DataError("select_dim_auc: graph lacks one of the pair classes "
                    "(edges: " + std::to_string(edges.size()) +
                    ", non-edges: " + std::to_string(nons.size()) + ")");

  const int dmax = d_candidates.back();
  std::vector<double> mean_auc(d_candidates.size(), 0.0);

  for (int f = 0; f < folds; ++f) {
    bool done = false;
    for (int attempt = 0; attempt < 10 && !done; ++attempt) {
      auto eng = make_engine(sub_seed(sub_seed(seed, f), attempt));
      auto held_e = sample_k(edges, per_class, eng);
      auto held_n = sample_k(nons, per_class, eng);

      Eigen::MatrixXd masked = g.weights;
      for (const auto& [i, j] : held_e) masked(i, j) = masked(j, i) = 0.0;

      Embedding emb;
      try {
        emb = ase(masked, dmax);
      } catch (const NumericalError&) {
        continue;  // masked graph lost rank; resample the fold
      }

      std::vector<Pair> held = held_e;
      held.insert(held.end(), held_n.begin(), held_n.end());
      std::vector<int> labels(held.size());
      for (size_t t = 0; t < held.size(); ++t) labels[t] = t < held_e.size() ? 1 : 0;

      for (size_t c = 0; c < d_candidates.size(); ++c) {
        const int d = d_candidates[c];
        auto block = emb.uhat.leftCols(d);
        std::vector<double> scores(held.size());
        for (size_t t = 0; t < held.size(); ++t)
          scores[t] = block.row(held[t].first).dot(block.row(held[t].second));
        mean_auc[c] += auc_from_scores(scores, labels);
      }
      done = true;
    }
    if (!done)
      throw DataError("select_dim_auc: fold " + std::to_string(f) +
                      " degenerate after 10 resampling attempts");
  }

  AucCurve curve;
  curve.dims = d_candidates;
  curve.auc.resize(mean_auc.size());
  for (size_t c = 0; c < mean_auc.size(); ++c) curve.auc[c] = mean_auc[c] / folds;
  const double best = *std::max_element(curve.auc.begin(), curve.auc.end());
  for (size_t c = 0; c < curve.auc.size(); ++c) {
    if (curve.auc[c] >= best - plateau_tol) {
      curve.chosen_d = curve.dims[c];
      break;
    }
  }
  return curve;
}

void save_embedding_csv(const Embedding& e, const std::filesystem::path& path) {
  std::vector<std::string> header;
  for (int c = 0; c < e.d(); ++c) header.push_back("u" + std::to_string(c + 1));
  std::vector<std::vector<std::string>> rows;
  rows.reserve(e.n());
  for (int i = 0; i < e.n(); ++i) {
    std::vector<std::string> row;
    for (int c = 0; c < e.d(); ++c) row.push_back(fmt_double(e.uhat(i, c)));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

void save_auc_csv(const AucCurve& c, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < c.dims.size(); ++i)
    rows.push_back({std::to_string(c.dims[i]), fmt_double(c.auc[i])});
  write_csv(path, {"d", "auc"}, rows);
}

}  // namespace peerinf
