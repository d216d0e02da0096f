#include "peerinf/counterfact.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "peerinf/csv.hpp"
#include "peerinf/errors.hpp"

namespace peerinf {

void InterventionConfig::validate() const {
  if (targeting != "true-failures" && targeting != "lsi-percentile")
    throw ConfigError("intervention: targeting must be true-failures or lsi-percentile");
  if (!(lsi_percentile > 0.0) || !(lsi_percentile < 100.0))
    throw ConfigError("intervention: lsi_percentile must lie in (0,100)");
  if (!(threshold_grid > 0.0) || threshold_grid > 0.5)
    throw ConfigError("intervention: threshold_grid must lie in (0,0.5]");
  if (buddy_weight.has_value() &&
      (!std::isfinite(*buddy_weight) || *buddy_weight < 0.0))
    throw ConfigError("intervention: buddy_weight must be finite and nonnegative");
}

double choose_threshold(const Eigen::VectorXd& fitted, const Eigen::VectorXd& s_true,
                        double grid) {
  const long n = fitted.size();
  if (n == 0 || s_true.size() != n)
    throw ConfigError("choose_threshold: fitted and s_true must be nonempty and aligned");
  for (long i = 0; i < n; ++i)
    if (s_true(i) != 0.0 && s_true(i) != 1.0)
      throw ConfigError("choose_threshold: s_true must be binary");
  if (!(grid > 0.0) || grid > 0.5)
    throw ConfigError("choose_threshold: grid must lie in (0,0.5]");

  double best_t = 0.0;
  double best_err = 2.0;
  const long steps = static_cast<long>(std::floor(1.0 / grid));
  for (long k = 0; k <= steps + 1; ++k) {
    const double t = std::min(1.0, k * grid);
    int wrong = 0;
    for (long i = 0; i < n; ++i)
      wrong += ((fitted(i) >= t ? 1.0 : 0.0) != s_true(i)) ? 1 : 0;
    const double err = static_cast<double>(wrong) / static_cast<double>(n);
    if (err < best_err) {
      best_err = err;
      best_t = t;
    }
    if (t == 1.0) break;
  }
  return best_t;
}

double buddy_exposure(double num, double den, double w) {
  if (!std::isfinite(num) || !std::isfinite(den) || !std::isfinite(w) || den < 0.0 ||
      w < 0.0)
    throw ConfigError("buddy_exposure: weights must be finite and nonnegative");
  if (den + w <= 0.0)
    throw ConfigError("buddy_exposure: total weight must be positive");
  return (num + w) / (den + w);
}

namespace {

double median_positive_weight(const Eigen::MatrixXd& w) {
  std::vector<double> pos;
  for (int i = 0; i < w.rows(); ++i)
    for (int j = i + 1; j < w.cols(); ++j)
      if (w(i, j) > 0.0) pos.push_back(w(i, j));
  if (pos.empty())
    throw DataError("buddy weight default: the unit has no positive edge weight");
  std::sort(pos.begin(), pos.end());
  const size_t m = pos.size();
  return m % 2 == 1 ? pos[m / 2] : 0.5 * (pos[m / 2 - 1] + pos[m / 2]);
}

// Exposure numerator and denominator for one universe row under the
// dataset's definition, iterating peers in index order exactly as the
// exposure construction does so recomputed values match bit for bit.
void exposure_terms(const ResidentTable& universe, const Eigen::MatrixXd& weights,
                    int u, bool def2, double& num, double& den) {
  const Resident& ego = universe.residents[static_cast<size_t>(u)];
  num = 0.0;
  den = 0.0;
  for (int j = 0; j < universe.n(); ++j) {
    if (j == u) continue;
    const double wj = weights(u, j);
    if (wj <= 0.0) continue;
    const Resident& peer = universe.residents[static_cast<size_t>(j)];
    if (def2) {
      if (!(peer.exit_day < ego.exit_day)) continue;
      num += wj * static_cast<double>(peer.graduated);
      den += wj;
    } else {
      num += wj * static_cast<double>(observed_outcome(ego, peer));
      den += wj;
    }
  }
}

}  // namespace

CascadeReport run_cascade(const TcDataset& ds, const Eigen::MatrixXd& uhat,
                          const Eigen::MatrixXd& omega, const EstimateReport& model,
                          const InterventionConfig& cfg) {
  cfg.validate();
  const int nrows = static_cast<int>(ds.rows.size());
  if (nrows == 0) throw DataError("run_cascade: the dataset has no estimation rows");
  if (uhat.rows() != ds.universe.n())
    throw ConfigError("run_cascade: uhat rows must cover the dataset universe");
  const int d = static_cast<int>(uhat.cols());
  const int q = static_cast<int>(ds.design.w.cols());

  int exposure_col = -1;
  int exposure_cols = 0;
  for (int c = 0; c < q; ++c)
    if (ds.design.w_labels[static_cast<size_t>(c)].rfind("peer_exposure", 0) == 0) {
      exposure_col = c;
      ++exposure_cols;
    }
  if (exposure_cols != 1)
    throw ConfigError(
        "run_cascade: single-exposure designs only (race-interaction designs are not "
        "supported by the intervention)");
  const bool def2 = ds.design.w_labels[static_cast<size_t>(exposure_col)] ==
                    "peer_exposure_def2";

  if (static_cast<int>(model.names.size()) != q + d)
    throw ConfigError("run_cascade: model coefficients do not match the design");
  for (int c = 0; c < q; ++c)
    if (model.names[static_cast<size_t>(c)] != ds.design.w_labels[static_cast<size_t>(c)])
      throw ConfigError("run_cascade: model coefficient names do not match the design");

  Eigen::MatrixXd usub(nrows, d);
  for (int k = 0; k < nrows; ++k)
    usub.row(k) = uhat.row(ds.rows[static_cast<size_t>(k)]);

  Eigen::MatrixXd x(nrows, q + d);
  x.leftCols(q) = ds.design.w;
  x.rightCols(d) = usub;
  const Eigen::VectorXd pre = x * model.coefficients;
  const Eigen::VectorXd& s_true = ds.outcome;

  CascadeReport rep;
  rep.targeting = cfg.targeting;
  rep.lsi_percentile = cfg.lsi_percentile;
  rep.seed = cfg.seed;
  rep.threshold = choose_threshold(pre, s_true, cfg.threshold_grid);
  rep.buddy_weight = cfg.buddy_weight.has_value()
                         ? *cfg.buddy_weight
                         : median_positive_weight(ds.graph.weights);

  // Target selection.
  std::vector<bool> targeted(static_cast<size_t>(nrows), false);
  if (cfg.targeting == "true-failures") {
    for (int k = 0; k < nrows; ++k) targeted[static_cast<size_t>(k)] = s_true(k) == 0.0;
  } else {
    std::vector<double> lsi(static_cast<size_t>(nrows));
    for (int k = 0; k < nrows; ++k)
      lsi[static_cast<size_t>(k)] =
          ds.universe.residents[static_cast<size_t>(ds.rows[static_cast<size_t>(k)])].lsi;
    std::vector<double> sorted = lsi;
    std::sort(sorted.begin(), sorted.end());
    const long rank = static_cast<long>(std::ceil(cfg.lsi_percentile / 100.0 * nrows));
    const long idx = std::clamp(rank - 1, 0L, static_cast<long>(nrows - 1));
    const double cutoff = sorted[static_cast<size_t>(idx)];
    for (int k = 0; k < nrows; ++k)
      targeted[static_cast<size_t>(k)] = lsi[static_cast<size_t>(k)] > cutoff;
  }

  // Step 1: attach the buddy, flip working outcomes for threshold crossings.
  const double rho_coef = model.coefficients(exposure_col);
  Eigen::VectorXd post1 = pre;
  Eigen::VectorXd working = s_true;
  std::vector<bool> cleared(static_cast<size_t>(nrows), false);
  for (int k = 0; k < nrows; ++k) {
    if (!targeted[static_cast<size_t>(k)]) continue;
    const int u = ds.rows[static_cast<size_t>(k)];
    double num = 0.0, den = 0.0;
    exposure_terms(ds.universe, ds.graph.weights, u, def2, num, den);
    const double e0 = ds.design.w(k, exposure_col);
    const double e1 = buddy_exposure(num, den, rep.buddy_weight);
    post1(k) = pre(k) + rho_coef * (e1 - e0);
    if (pre(k) < rep.threshold && post1(k) >= rep.threshold) {
      cleared[static_cast<size_t>(k)] = true;
      working(k) = 1.0;
    }
  }

  // Step 2: propagate the working outcomes through every exposure on the
  // fixed graph, refit, and predict against the unchanged threshold.
  ResidentTable modified = ds.universe;
  for (int k = 0; k < nrows; ++k)
    modified.residents[static_cast<size_t>(ds.rows[static_cast<size_t>(k)])].graduated =
        working(k) == 1.0 ? 1 : 0;

  DesignMatrix design2 = ds.design;
  for (int k = 0; k < nrows; ++k) {
    const int u = ds.rows[static_cast<size_t>(k)];
    double num = 0.0, den = 0.0;
    exposure_terms(modified, ds.graph.weights, u, def2, num, den);
    if (den <= 0.0)
      throw DataError("run_cascade: an estimation row lost its exposure denominator");
    design2.w(k, exposure_col) = num / den;
  }
  design2.uhat = usub;

  try {
    rep.refit = fit_bias_corrected(design2, working, omega);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("counterfactual step-2 re-estimation failed: ") +
                         e.what());
  }

  Eigen::MatrixXd x2(nrows, q + d);
  x2.leftCols(q) = design2.w;
  x2.rightCols(d) = usub;
  const Eigen::VectorXd post2 = x2 * rep.refit.coefficients;

  rep.trace.resize(static_cast<size_t>(nrows));
  for (int k = 0; k < nrows; ++k) {
    ResidentTrace& t = rep.trace[static_cast<size_t>(k)];
    t.id = ds.row_ids[static_cast<size_t>(k)];
    t.pre = pre(k);
    t.post1 = post1(k);
    t.post2 = post2(k);
    t.targeted = targeted[static_cast<size_t>(k)];
    t.cleared = cleared[static_cast<size_t>(k)];
    t.below_post = post2(k) < rep.threshold;
    t.outcome_true = s_true(k) == 1.0 ? 1 : 0;
    t.outcome_working = working(k) == 1.0 ? 1 : 0;
    rep.treated_count += t.targeted ? 1 : 0;
    rep.failures_true += t.outcome_true == 0 ? 1 : 0;
    rep.below_threshold_pre += pre(k) < rep.threshold ? 1 : 0;
    rep.below_threshold_post += t.below_post ? 1 : 0;
  }
  return rep;
}

nlohmann::ordered_json cascade_to_json(const CascadeReport& report) {
  nlohmann::ordered_json j;
  j["targeting"] = report.targeting;
  j["lsi_percentile"] = report.lsi_percentile;
  j["buddy_weight"] = report.buddy_weight;
  j["seed"] = report.seed;
  j["threshold"] = report.threshold;
  j["treated_count"] = report.treated_count;
  j["failures_true"] = report.failures_true;
  j["below_threshold_pre"] = report.below_threshold_pre;
  j["below_threshold_post"] = report.below_threshold_post;
  j["refit"] = report_to_json(report.refit);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const ResidentTrace& t : report.trace) {
    nlohmann::ordered_json r;
    r["id"] = t.id;
    r["pre"] = t.pre;
    r["post1"] = t.post1;
    r["post2"] = t.post2;
    r["targeted"] = t.targeted;
    r["cleared"] = t.cleared;
    r["below_post"] = t.below_post;
    r["outcome_true"] = t.outcome_true;
    r["outcome_working"] = t.outcome_working;
    rows.push_back(std::move(r));
  }
  j["trace"] = std::move(rows);
  return j;
}

void save_cascade_json(const CascadeReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << cascade_to_json(report).dump(2) << "\n";
  if (!out) throw DataError("failed while writing " + path.string());
}

void save_cascade_summary_csv(const CascadeReport& report,
                              const std::filesystem::path& path) {
  write_csv(path,
            {"targeting", "lsi_percentile", "buddy_weight", "threshold", "treated",
             "failures_true", "below_threshold_pre", "below_threshold_post"},
            {{report.targeting, fmt_double(report.lsi_percentile),
              fmt_double(report.buddy_weight), fmt_double(report.threshold),
              std::to_string(report.treated_count), std::to_string(report.failures_true),
              std::to_string(report.below_threshold_pre),
              std::to_string(report.below_threshold_post)}});
}

}  // namespace peerinf
