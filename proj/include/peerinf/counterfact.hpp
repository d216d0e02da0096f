#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "peerinf/embed.hpp"
#include "peerinf/peerlm.hpp"
#include "peerinf/tcdata.hpp"

namespace peerinf {

// Buddy-assignment intervention settings.
//
// targeting "true-failures" treats every estimation-row resident who did not
// graduate; "lsi-percentile" treats residents whose intake LSI exceeds the
// given percentile of the estimation rows (nearest-rank quantile, strict >,
// so lowering the percentile never shrinks the treated set).
//
// buddy_weight is the affirmation weight of one synthetic, already-exited,
// graduated peer attached to each target. Unset means the unit median
// positive edge weight. Zero is allowed as an explicit no-op probe: with a
// weightless buddy nothing crosses the threshold and the cascade must
// reproduce the no-intervention prediction exactly.
struct InterventionConfig {
  std::string targeting = "true-failures";  // true-failures | lsi-percentile
  double lsi_percentile = 90.0;
  std::optional<double> buddy_weight;
  double threshold_grid = 0.001;
  std::uint64_t seed = 0;  // recorded in reports; the cascade itself is deterministic

  void validate() const;
};

// Misclassification-minimizing graduation threshold: scans t = 0, grid,
// 2*grid, ..., 1 and returns the smallest t minimizing
// mean(1{fitted >= t} != s_true).
double choose_threshold(const Eigen::VectorXd& fitted, const Eigen::VectorXd& s_true,
                        double grid = 0.001);

// One buddy attached to an exposure with numerator num and denominator den:
// (num + w) / (den + w). The buddy is graduated and already exited, so it
// contributes w to both sides.
double buddy_exposure(double num, double den, double w);

// Per-resident audit trail of the two-step cascade, aligned with the
// dataset's estimation rows.
struct ResidentTrace {
  std::string id;
  double pre = 0.0;    // step-0 propensity under the input model
  double post1 = 0.0;  // propensity with the buddy attached (targets only;
                       // equals pre otherwise)
  double post2 = 0.0;  // propensity under the step-2 refit
  bool targeted = false;
  bool cleared = false;  // crossed the threshold at step 1 (pre < t <= post1)
  bool below_post = false;
  int outcome_true = 0;
  int outcome_working = 0;
};

struct CascadeReport {
  double threshold = 0.0;
  double buddy_weight = 0.0;
  std::string targeting;
  double lsi_percentile = 0.0;
  std::uint64_t seed = 0;
  int treated_count = 0;
  int failures_true = 0;          // estimation rows with S = 0
  int below_threshold_pre = 0;    // step-0 propensity below threshold
  int below_threshold_post = 0;   // step-2 propensity below threshold
  std::vector<ResidentTrace> trace;
  EstimateReport refit;           // step-2 model on the working outcomes
};

// Two-step intervention cascade.
//
// Step 0 predicts graduation propensities for the estimation rows from
// `model` (coefficients ordered w labels then latent columns, matching
// `ds.design` plus `uhat`) and picks the threshold. Step 1 attaches the
// buddy to each target and flips the working outcome to 1 for targets the
// buddy pushes across the threshold. Step 2 recomputes every exposure from
// the working outcomes on the fixed graph (the buddy does not persist; the
// flipped outcomes are what propagate), refits the bias-corrected model
// with the same latent block and omega, and counts predictions below the
// unchanged threshold.
//
// `uhat` is the embedding over the dataset universe; `omega` the correction
// assembled for the estimation rows. Single-exposure designs only (def1 or
// def2); race-interaction designs are rejected.
CascadeReport run_cascade(const TcDataset& ds, const Eigen::MatrixXd& uhat,
                          const Eigen::MatrixXd& omega, const EstimateReport& model,
                          const InterventionConfig& cfg);

// Full report as JSON (config echo, counts, per-resident trace).
nlohmann::ordered_json cascade_to_json(const CascadeReport& report);
void save_cascade_json(const CascadeReport& report, const std::filesystem::path& path);

// One-row summary CSV: targeting, lsi_percentile, buddy_weight, threshold,
// treated, failures_true, below_threshold_pre, below_threshold_post.
void save_cascade_summary_csv(const CascadeReport& report,
                              const std::filesystem::path& path);

}  // namespace peerinf
