#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "peerinf/counterfact.hpp"
#include "peerinf/embed.hpp"
#include "peerinf/errors.hpp"
#include "peerinf/mecov.hpp"
#include "peerinf/peerlm.hpp"
#include "peerinf/tcdata.hpp"

using namespace peerinf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path p;
  TempDir() {
    p = fs::temp_directory_path() / ("peerinf_cf_" + std::to_string(::getpid()));
    fs::create_directories(p);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(p, ec);
  }
};

// One fitted synthetic unit shared by the cascade tests.
struct FittedUnit {
  TcDataset ds;
  Embedding emb;
  Eigen::MatrixXd omega;
  EstimateReport model;
};

FittedUnit make_fitted_unit(int n, std::uint64_t seed, const std::string& definition) {
  SyntheticTcConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  SyntheticTc unit = gen_synthetic_tc(cfg);
  TcDesignOptions opts;
  opts.definition = definition;
  FittedUnit f;
  f.ds = build_tc_dataset(unit.residents, unit.events, opts);
  f.emb = ase(f.ds.graph, 2);
  NodeCovariances cov = delta_rdpg(f.emb);
  f.omega = assemble_omega(cov, static_cast<int>(f.ds.design.w.cols()), f.ds.rows);
  DesignMatrix with = f.ds.design;
  Eigen::MatrixXd usub(static_cast<int>(f.ds.rows.size()), f.emb.d());
  for (size_t k = 0; k < f.ds.rows.size(); ++k)
    usub.row(static_cast<int>(k)) = f.emb.uhat.row(f.ds.rows[k]);
  with.uhat = usub;
  f.model = fit_bias_corrected(with, f.ds.outcome, f.omega);
  return f;
}

}  // namespace

TEST_CASE("threshold search returns the smallest minimizer on the grid") {
  SUBCASE("perfectly separated fits pick the first grid point past the gap") {
    Eigen::VectorXd fitted(4), s(4);
    fitted << 0.1, 0.2, 0.8, 0.9;
    s << 0, 0, 1, 1;
    const double t = choose_threshold(fitted, s, 0.001);
    CHECK(t == doctest::Approx(0.201));
    int wrong = 0;
    for (int i = 0; i < 4; ++i)
      wrong += ((fitted(i) >= t ? 1.0 : 0.0) != s(i)) ? 1 : 0;
    CHECK(wrong == 0);
  }
  SUBCASE("all graduates choose the grid minimum") {
    Eigen::VectorXd fitted(3), s(3);
    fitted << 0.3, 0.5, 0.7;
    s << 1, 1, 1;
    CHECK(choose_threshold(fitted, s, 0.001) == 0.0);
  }
  SUBCASE("binary labels are required") {
    Eigen::VectorXd fitted(2), s(2);
    fitted << 0.2, 0.8;
    s << 0.5, 1;
    CHECK_THROWS_AS(choose_threshold(fitted, s, 0.001), ConfigError);
  }
}

TEST_CASE("buddy exposure follows the additive-weight rule") {
  CHECK(buddy_exposure(4.0, 10.0, 5.0) == doctest::Approx(0.6));
  CHECK(buddy_exposure(7.0, 7.0, 3.0) == doctest::Approx(1.0));  // already at one
  CHECK(buddy_exposure(1.0, 10.0, 1e12) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(buddy_exposure(4.0, 10.0, 0.0) == doctest::Approx(0.4));  // weightless no-op
  CHECK_THROWS_AS(buddy_exposure(1.0, -1.0, 2.0), ConfigError);
}

TEST_CASE("a weightless buddy reproduces the no-intervention prediction") {
  FittedUnit f = make_fitted_unit(150, 1001, "def1");
  InterventionConfig cfg;
  cfg.buddy_weight = 0.0;
  CascadeReport rep = run_cascade(f.ds, f.emb.uhat, f.omega, f.model, cfg);
  CHECK(rep.treated_count == rep.failures_true);
  CHECK(rep.below_threshold_post == rep.below_threshold_pre);
  for (const ResidentTrace& t : rep.trace) {
    CHECK(t.post1 == t.pre);
    CHECK(t.post2 == t.pre);
    CHECK(!t.cleared);
    CHECK(t.outcome_working == t.outcome_true);
  }
  // The refit on unchanged data is the input model, coefficient for
  // coefficient.
  REQUIRE(rep.refit.coefficients.size() == f.model.coefficients.size());
  for (long i = 0; i < f.model.coefficients.size(); ++i)
    CHECK(rep.refit.coefficients(i) == f.model.coefficients(i));
}

TEST_CASE("treatment is monotone in the lsi percentile cutoff") {
  FittedUnit f = make_fitted_unit(150, 1001, "def1");
  int prev = -1;
  for (double pct : {90.0, 80.0, 75.0}) {
    InterventionConfig cfg;
    cfg.targeting = "lsi-percentile";
    cfg.lsi_percentile = pct;
    CascadeReport rep = run_cascade(f.ds, f.emb.uhat, f.omega, f.model, cfg);
    CHECK(rep.treated_count >= prev);
    CHECK(rep.treated_count <= static_cast<int>(f.ds.rows.size()));
    CHECK(rep.below_threshold_post >= 0);
    prev = rep.treated_count;
  }
}

TEST_CASE("a heavier buddy never lowers a target's step-1 propensity") {
  FittedUnit f = make_fitted_unit(150, 1001, "def1");
  REQUIRE(f.model.rho_hat() > 0.0);
  InterventionConfig light, heavy;
  light.buddy_weight = 1.0;
  heavy.buddy_weight = 10.0;
  CascadeReport a = run_cascade(f.ds, f.emb.uhat, f.omega, f.model, light);
  CascadeReport b = run_cascade(f.ds, f.emb.uhat, f.omega, f.model, heavy);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t k = 0; k < a.trace.size(); ++k) {
    if (!a.trace[k].targeted) continue;
    CHECK(b.trace[k].post1 >= a.trace[k].post1);
  }
}

TEST_CASE("the cascade is deterministic and its flags are consistent") {
  FittedUnit f = make_fitted_unit(150, 2002, "def1");
  InterventionConfig cfg;  // default buddy weight: unit median edge weight
  CascadeReport a = run_cascade(f.ds, f.emb.uhat, f.omega, f.model, cfg);
  CascadeReport b = run_cascade(f.ds, f.emb.uhat, f.omega, f.model, cfg);
  CHECK(a.threshold == b.threshold);
  CHECK(a.buddy_weight == b.buddy_weight);
  CHECK(a.treated_count == b.treated_count);
  CHECK(a.below_threshold_post == b.below_threshold_post);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t k = 0; k < a.trace.size(); ++k) {
    CHECK(a.trace[k].pre == b.trace[k].pre);
    CHECK(a.trace[k].post2 == b.trace[k].post2);
  }
  CHECK(a.buddy_weight > 0.0);
  for (const ResidentTrace& t : a.trace) {
    if (t.cleared) {
      CHECK(t.targeted);
      CHECK(t.pre < a.threshold);
      CHECK(t.post1 >= a.threshold);
      CHECK(t.outcome_working == 1);
    }
    if (!t.targeted) CHECK(t.post1 == t.pre);
    if (t.outcome_true == 1) CHECK(t.outcome_working == 1);
  }
  CHECK(a.failures_true ==
        static_cast<int>(a.trace.size()) -
            static_cast<int>(std::count_if(a.trace.begin(), a.trace.end(),
                                           [](const ResidentTrace& t) {
                                             return t.outcome_true == 1;
                                           })));
}

TEST_CASE("the definition-2 cascade runs end to end") {
  FittedUnit f = make_fitted_unit(120, 3003, "def2");
  InterventionConfig cfg;
  CascadeReport rep = run_cascade(f.ds, f.emb.uhat, f.omega, f.model, cfg);
  CHECK(rep.treated_count == rep.failures_true);
  CHECK(rep.trace.size() == f.ds.rows.size());
}

TEST_CASE("race-interaction designs are rejected by the cascade") {
  SyntheticTcConfig cfg;
  cfg.n = 100;
  cfg.seed = 4004;
  SyntheticTc unit = gen_synthetic_tc(cfg);
  TcDesignOptions opts;
  opts.race_interactions = true;
  TcDataset ds = build_tc_dataset(unit.residents, unit.events, opts);
  Embedding emb = ase(ds.graph, 2);
  NodeCovariances cov = delta_rdpg(emb);
  Eigen::MatrixXd omega =
      assemble_omega(cov, static_cast<int>(ds.design.w.cols()), ds.rows);
  DesignMatrix with = ds.design;
  Eigen::MatrixXd usub(static_cast<int>(ds.rows.size()), emb.d());
  for (size_t k = 0; k < ds.rows.size(); ++k)
    usub.row(static_cast<int>(k)) = emb.uhat.row(ds.rows[k]);
  with.uhat = usub;
  EstimateReport model = fit_bias_corrected(with, ds.outcome, omega);
  InterventionConfig icfg;
  CHECK_THROWS_AS(run_cascade(ds, emb.uhat, omega, model, icfg), ConfigError);
}

TEST_CASE("cascade reports serialize to json and a summary row") {
  FittedUnit f = make_fitted_unit(120, 5005, "def1");
  InterventionConfig cfg;
  cfg.targeting = "lsi-percentile";
  cfg.lsi_percentile = 80.0;
  CascadeReport rep = run_cascade(f.ds, f.emb.uhat, f.omega, f.model, cfg);
  TempDir tmp;
  save_cascade_json(rep, tmp.p / "cascade.json");
  save_cascade_summary_csv(rep, tmp.p / "summary.csv");

  std::ifstream in(tmp.p / "cascade.json");
  nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j["threshold"].get<double>() == rep.threshold);
  CHECK(j["treated_count"].get<int>() == rep.treated_count);
  CHECK(j["trace"].size() == rep.trace.size());

  std::ifstream cs(tmp.p / "summary.csv");
  std::string header, row;
  std::getline(cs, header);
  std::getline(cs, row);
  CHECK(header ==
        "targeting,lsi_percentile,buddy_weight,threshold,treated,failures_true,"
        "below_threshold_pre,below_threshold_post");
  CHECK(row.find("lsi-percentile") == 0);
}

TEST_CASE("intervention configs are validated") {
  InterventionConfig cfg;
  cfg.targeting = "everyone";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  InterventionConfig cfg2;
  cfg2.lsi_percentile = 100.0;
  cfg2.targeting = "lsi-percentile";
  CHECK_THROWS_AS(cfg2.validate(), ConfigError);
  InterventionConfig cfg3;
  cfg3.buddy_weight = -1.0;
  CHECK_THROWS_AS(cfg3.validate(), ConfigError);
  InterventionConfig ok;
  ok.targeting = "lsi-percentile";
  ok.lsi_percentile = 75.0;
  ok.validate();
}
