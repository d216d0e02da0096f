#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace peerinf {

// Predictors for the outcome models. `w` holds the non-latent columns in a
// fixed order (intercept, lagged own outcome when present, peer exposures,
// covariates); `uhat` is the optional latent block. Internally every fit
// places the latent block first so the bias-correction matrix lines up; the
// reported coefficient order is the w block followed by the latent block.
//
// Label conventions: a column named "intercept" must be all ones; columns
// whose label starts with "peer" are peer-effect columns and feed the rho
// field of the report; labels starting with "peer_exposure" must lie in
// [0,1].
struct DesignMatrix {
  Eigen::MatrixXd w;
  std::vector<std::string> w_labels;
  std::optional<Eigen::MatrixXd> uhat;

  void validate() const;
  int n() const { return static_cast<int>(w.rows()); }
  int total_cols() const {
    return static_cast<int>(w.cols()) + (uhat ? static_cast<int>(uhat->cols()) : 0);
  }
};

// Fit output. Coefficient order: w labels first, then u1..ud. For the
// logistic variant `ame` carries the average marginal effects (zero for the
// intercept) with delta-method standard errors, and rho reports the AME of
// the peer columns rather than the raw coefficient.
struct EstimateReport {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd std_errors;
  std::vector<std::pair<std::string, double>> rho;
  std::string method;  // ols, homophily-ols, bias-corrected, logistic-ame
  int n_obs = 0;
  double condition_number = 0.0;
  std::optional<Eigen::VectorXd> ame;
  std::optional<Eigen::VectorXd> ame_std_errors;

  double rho_hat() const;  // first peer coefficient; throws if none
};

// Least squares on [uhat | w] (or w alone), classical standard errors.
EstimateReport fit_ols(const DesignMatrix& design, const Eigen::VectorXd& y);

// Measurement-error corrected least squares: solves
// (M_WU - Omega) theta = M_Y with M_WU the Gram matrix of [uhat | w], and
// sandwich standard errors (M-O)^-1 M (M-O)^-1 sigma^2 from the corrected
// residuals. Omega must be (d+q) x (d+q) with the latent block first.
EstimateReport fit_bias_corrected(const DesignMatrix& design, const Eigen::VectorXd& y,
                                  const Eigen::MatrixXd& omega);

// Logistic fit by iteratively reweighted least squares with average
// marginal effects: density-weighted coefficient for continuous columns,
// discrete difference for binary columns.
EstimateReport fit_logistic_ame(const DesignMatrix& design, const Eigen::VectorXd& s_binary);

nlohmann::ordered_json report_to_json(const EstimateReport& report);

// One flat row: method, n_obs, condition_number, then coef:/se: pairs per
// label (plus ame:/ame_se: pairs when present).
void save_estimate_csv(const EstimateReport& report, const std::filesystem::path& path);

}  // namespace peerinf
