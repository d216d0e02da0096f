#include "peerinf/peerlm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "peerinf/csv.hpp"
#include "peerinf/errors.hpp"

namespace peerinf {

namespace {

bool starts_with(const std::string& s, const char* prefix) {
  return s.rfind(prefix, 0) == 0;
}

// Internal design: latent block first so the correction matrix lines up.
struct StackedDesign {
  Eigen::MatrixXd x;
  std::vector<std::string> labels;  // internal (latent-first) order
  int d = 0;                        // latent column count
};

StackedDesign stack_design(const DesignMatrix& design) {
  StackedDesign s;
  const int n = design.n();
  const int q = static_cast<int>(design.w.cols());
  s.d = design.uhat ? static_cast<int>(design.uhat->cols()) : 0;
  s.x.resize(n, s.d + q);
  if (design.uhat) s.x.leftCols(s.d) = *design.uhat;
  s.x.rightCols(q) = design.w;
  for (int c = 0; c < s.d; ++c) s.labels.push_back("u" + std::to_string(c + 1));
  s.labels.insert(s.labels.end(), design.w_labels.begin(), design.w_labels.end());
  return s;
}

// Reorder an internal (latent-first) vector into report order (w block
// first, then the latent block).
Eigen::VectorXd to_report_order(const Eigen::VectorXd& internal, int d) {
  const int p = static_cast<int>(internal.size());
  Eigen::VectorXd out(p);
  out.head(p - d) = internal.tail(p - d);
  out.tail(d) = internal.head(d);
  return out;
}

EstimateReport make_report(const DesignMatrix& design, const StackedDesign& s,
                           const Eigen::VectorXd& coef_internal,
                           const Eigen::VectorXd& se_internal, const std::string& method,
                           double condition_number) {
  EstimateReport r;
  r.method = method;
  r.n_obs = design.n();
  r.condition_number = condition_number;
  r.names = design.w_labels;
  for (int c = 0; c < s.d; ++c) r.names.push_back("u" + std::to_string(c + 1));
  r.coefficients = to_report_order(coef_internal, s.d);
  r.std_errors = to_report_order(se_internal, s.d);
  for (size_t i = 0; i < r.names.size(); ++i)
    if (starts_with(r.names[i], "peer"))
      r.rho.push_back({r.names[i], r.coefficients(static_cast<Eigen::Index>(i))});
  return r;
}

void check_response(const DesignMatrix& design, const Eigen::VectorXd& y, const char* who) {
  if (y.size() != design.n())
    throw DataError(std::string(who) + ": response length does not match the design");
  if (!y.allFinite()) throw DataError(std::string(who) + ": response must be finite");
  if (design.n() <= design.total_cols())
    throw DataError(std::string(who) + ": need more observations than predictors");
}

}  // namespace

void DesignMatrix::validate() const {
  const int n_rows = static_cast<int>(w.rows());
  const int q = static_cast<int>(w.cols());
  if (n_rows < 1 || q < 1) throw DataError("design: empty predictor matrix");
  if (static_cast<int>(w_labels.size()) != q)
    throw ConfigError("design: label count does not match the predictor columns");
  std::set<std::string> seen;
  for (const auto& label : w_labels) {
    if (label.empty() || label.find(',') != std::string::npos)
      throw ConfigError("design: labels must be nonempty and comma-free");
    if (!seen.insert(label).second)
      throw ConfigError("design: duplicate column label '" + label + "'");
  }
  if (!w.allFinite()) throw DataError("design: predictors contain non-finite values");
  for (int c = 0; c < q; ++c) {
    if (w_labels[static_cast<size_t>(c)] == "intercept") {
      if ((w.col(c).array() != 1.0).any())
        throw DataError("design: intercept column must be all ones");
    }
    if (starts_with(w_labels[static_cast<size_t>(c)], "peer_exposure")) {
      if (w.col(c).minCoeff() < -1e-12 || w.col(c).maxCoeff() > 1.0 + 1e-12)
        throw DataError("design: column '" + w_labels[static_cast<size_t>(c)] +
                        "' must lie in [0,1]");
    }
  }
  if (uhat) {
    if (uhat->rows() != n_rows) throw DataError("design: latent block row count mismatch");
    if (uhat->cols() < 1) throw DataError("design: latent block has no columns");
    if (!uhat->allFinite()) throw DataError("design: latent block contains non-finite values");
  }
}

double EstimateReport::rho_hat() const {
  if (rho.empty()) throw DataError("estimate report: no peer-effect column present");
  return rho.front().second;
}

EstimateReport fit_ols(const DesignMatrix& design, const Eigen::VectorXd& y) {
  design.validate();
  check_response(design, y, "fit_ols");
  StackedDesign s = stack_design(design);
  const int n = design.n();
  const int p = static_cast<int>(s.x.cols());

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(s.x);
  if (qr.rank() < p) {
    const auto& perm = qr.colsPermutation().indices();
    std::string cols;
    for (int j = qr.rank(); j < p; ++j) {
      if (!cols.empty()) cols += ", ";
      cols += s.labels[static_cast<size_t>(perm(j))];
    }
    throw NumericalError("fit_ols: design is rank deficient; collinear columns: " + cols);
  }
  Eigen::VectorXd rdiag = qr.matrixR().diagonal().head(p).cwiseAbs();
  const double cond = std::pow(rdiag.maxCoeff() / rdiag.minCoeff(), 2.0);
  if (cond >= 1e12)
    throw NumericalError("fit_ols: Gram matrix condition number exceeds 1e12");

  Eigen::VectorXd beta = qr.solve(y);
  const double sigma2 = (y - s.x * beta).squaredNorm() / (n - p);
  Eigen::MatrixXd gram_inv =
      (s.x.transpose() * s.x).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd se = (sigma2 * gram_inv.diagonal()).cwiseSqrt();

  return make_report(design, s, beta, se, design.uhat ? "homophily-ols" : "ols", cond);
}

EstimateReport fit_bias_corrected(const DesignMatrix& design, const Eigen::VectorXd& y,
                                  const Eigen::MatrixXd& omega) {
  design.validate();
  if (!design.uhat)
    throw ConfigError("fit_bias_corrected: a latent block is required for the correction");
  check_response(design, y, "fit_bias_corrected");
  StackedDesign s = stack_design(design);
  const int n = design.n();
  const int p = static_cast<int>(s.x.cols());
  if (omega.rows() != p || omega.cols() != p)
    throw ConfigError("fit_bias_corrected: omega must be " + std::to_string(p) + "x" +
                      std::to_string(p) + " (latent block first)");
  if (!omega.allFinite()) throw ConfigError("fit_bias_corrected: omega must be finite");
  if ((omega - omega.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw ConfigError("fit_bias_corrected: omega must be symmetric");

  Eigen::MatrixXd m = s.x.transpose() * s.x;
  Eigen::MatrixXd c = m - omega;
  c = 0.5 * (c + c.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  if (es.info() != Eigen::Success)
    throw NumericalError("fit_bias_corrected: eigendecomposition failed");
  // The corrected Gram may be indefinite when the correction removes most of the
  // information in one direction; that is still solvable. Reject only singular,
  // negative-definite, or hopelessly ill-conditioned systems.
  const Eigen::VectorXd absev = es.eigenvalues().cwiseAbs();
  const double amax = absev.maxCoeff();
  const double amin = absev.minCoeff();
  if (amax == 0.0 || amin <= amax * 1e-15 || es.eigenvalues().maxCoeff() < 0.0)
    throw NumericalError(
        "fit_bias_corrected: the corrected Gram matrix is singular or negative after "
        "correction; the correction exceeds the information in the data (over-correction). "
        "Use a larger sample or a smaller correction.");
  const double cond = amax / amin;
  if (cond >= 1e12)
    throw NumericalError(
        "fit_bias_corrected: the corrected Gram matrix has condition number >= 1e12; the "
        "correction nearly exhausts the information in the data (over-correction). Use a "
        "larger sample or a smaller correction.");

  Eigen::MatrixXd cinv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                         es.eigenvectors().transpose();
  Eigen::VectorXd theta = cinv * (s.x.transpose() * y);
  const double sigma2 = (y - s.x * theta).squaredNorm() / (n - p);
  Eigen::MatrixXd cov = cinv * m * cinv * sigma2;
  Eigen::VectorXd se = cov.diagonal().cwiseSqrt();

  return make_report(design, s, theta, se, "bias-corrected", cond);
}

EstimateReport fit_logistic_ame(const DesignMatrix& design, const Eigen::VectorXd& s_binary) {
  design.validate();
  check_response(design, s_binary, "fit_logistic_ame");
  for (Eigen::Index i = 0; i < s_binary.size(); ++i)
    if (s_binary(i) != 0.0 && s_binary(i) != 1.0)
      throw DataError("fit_logistic_ame: outcomes must be 0 or 1");
  const double smean = s_binary.mean();
  if (smean == 0.0 || smean == 1.0)
    throw DataError("fit_logistic_ame: both outcome classes must be present");

  StackedDesign sd = stack_design(design);
  const Eigen::MatrixXd& x = sd.x;
  const int n = design.n();
  const int p = static_cast<int>(x.cols());

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta(n), prob(n), wts(n);
  bool converged = false;
  int iterations = 0;
  for (int it = 1; it <= 100; ++it) {
    iterations = it;
    eta = x * beta;

    if (it > 1) {
      bool all_correct = true;
      double min_margin = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) {
        const double margin = (s_binary(i) == 1.0 ? eta(i) : -eta(i));
        if (margin <= 0.0) all_correct = false;
        min_margin = std::min(min_margin, margin);
      }
      if (all_correct && min_margin > 20.0)
        throw NumericalError(
            "fit_logistic_ame: perfect separation detected; coefficients diverge");
    }

    prob = (1.0 + (-eta.array()).exp()).inverse();
    wts = (prob.array() * (1.0 - prob.array())).max(1e-10);
    // Fisher scoring written as X'(W eta + (s - p)) so saturated weights
    // never divide anything.
    Eigen::MatrixXd a = x.transpose() * wts.asDiagonal() * x;
    Eigen::VectorXd b =
        x.transpose() * (wts.asDiagonal() * eta + (s_binary - prob));
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success)
      throw NumericalError("fit_logistic_ame: singular weighted Gram matrix");
    Eigen::VectorXd next = ldlt.solve(b);
    const double step = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    if (step < 1e-10) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NumericalError("fit_logistic_ame: no convergence after " +
                         std::to_string(iterations) + " iterations");

  eta = x * beta;
  prob = (1.0 + (-eta.array()).exp()).inverse();
  wts = (prob.array() * (1.0 - prob.array())).max(1e-10);
  Eigen::MatrixXd a = x.transpose() * wts.asDiagonal() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success)
    throw NumericalError("fit_logistic_ame: eigendecomposition failed");
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (emin <= 0.0 || emax / emin >= 1e12)
    throw NumericalError("fit_logistic_ame: information matrix condition number exceeds 1e12");
  Eigen::MatrixXd v = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                      es.eigenvectors().transpose();
  Eigen::VectorXd se = v.diagonal().cwiseSqrt();

  // Average marginal effects with delta-method standard errors.
  Eigen::VectorXd lambda = prob.array() * (1.0 - prob.array());
  Eigen::VectorXd ame_internal = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd ame_se_internal = Eigen::VectorXd::Zero(p);
  for (int k = 0; k < p; ++k) {
    if (sd.labels[static_cast<size_t>(k)] == "intercept") continue;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
    const bool binary =
        ((x.col(k).array() == 0.0) || (x.col(k).array() == 1.0)).all();
    if (binary) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        const double base = eta(i) - x(i, k) * beta(k);
        const double p1 = 1.0 / (1.0 + std::exp(-(base + beta(k))));
        const double p0 = 1.0 / (1.0 + std::exp(-base));
        total += p1 - p0;
        const double l1 = p1 * (1.0 - p1);
        const double l0 = p0 * (1.0 - p0);
        for (int l = 0; l < p; ++l) {
          const double x1 = (l == k) ? 1.0 : x(i, l);
          const double x0 = (l == k) ? 0.0 : x(i, l);
          grad(l) += l1 * x1 - l0 * x0;
        }
      }
      ame_internal(k) = total / n;
      grad /= n;
    } else {
      const double mean_lambda = lambda.mean();
      ame_internal(k) = beta(k) * mean_lambda;
      for (int l = 0; l < p; ++l) {
        double cross = 0.0;
        for (int i = 0; i < n; ++i)
          cross += lambda(i) * (1.0 - 2.0 * prob(i)) * x(i, l);
        grad(l) = beta(k) * cross / n;
      }
      grad(k) += mean_lambda;
    }
    ame_se_internal(k) = std::sqrt(grad.dot(v * grad));
  }

  EstimateReport r = make_report(design, sd, beta, se, "logistic-ame", emax / emin);
  r.ame = to_report_order(ame_internal, sd.d);
  r.ame_std_errors = to_report_order(ame_se_internal, sd.d);
  // For the logistic variant the peer effect is reported on the AME scale.
  r.rho.clear();
  for (size_t i = 0; i < r.names.size(); ++i)
    if (starts_with(r.names[i], "peer"))
      r.rho.push_back({r.names[i], (*r.ame)(static_cast<Eigen::Index>(i))});
  return r;
}

nlohmann::ordered_json report_to_json(const EstimateReport& report) {
  nlohmann::ordered_json j;
  j["method"] = report.method;
  j["n_obs"] = report.n_obs;
  j["condition_number"] = report.condition_number;
  nlohmann::ordered_json coefs = nlohmann::ordered_json::array();
  for (size_t i = 0; i < report.names.size(); ++i) {
    nlohmann::ordered_json c;
    c["name"] = report.names[i];
    c["estimate"] = report.coefficients(static_cast<Eigen::Index>(i));
    c["std_error"] = report.std_errors(static_cast<Eigen::Index>(i));
    if (report.ame) {
      c["ame"] = (*report.ame)(static_cast<Eigen::Index>(i));
      c["ame_std_error"] = (*report.ame_std_errors)(static_cast<Eigen::Index>(i));
    }
    coefs.push_back(c);
  }
  j["coefficients"] = coefs;
  nlohmann::ordered_json rho = nlohmann::ordered_json::array();
  for (const auto& [name, value] : report.rho) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["estimate"] = value;
    rho.push_back(entry);
  }
  j["rho"] = rho;
  return j;
}

void save_estimate_csv(const EstimateReport& report, const std::filesystem::path& path) {
  std::vector<std::string> header = {"method", "n_obs", "condition_number"};
  std::vector<std::string> row = {report.method, std::to_string(report.n_obs),
                                  fmt_double(report.condition_number)};
  for (size_t i = 0; i < report.names.size(); ++i) {
    header.push_back("coef:" + report.names[i]);
    header.push_back("se:" + report.names[i]);
    row.push_back(fmt_double(report.coefficients(static_cast<Eigen::Index>(i))));
    row.push_back(fmt_double(report.std_errors(static_cast<Eigen::Index>(i))));
    if (report.ame) {
      header.push_back("ame:" + report.names[i]);
      header.push_back("ame_se:" + report.names[i]);
      row.push_back(fmt_double((*report.ame)(static_cast<Eigen::Index>(i))));
      row.push_back(fmt_double((*report.ame_std_errors)(static_cast<Eigen::Index>(i))));
    }
  }
  write_csv(path, header, {row});
}

}  // namespace peerinf
