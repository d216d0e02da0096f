#include "peerinf/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>
#include <utility>

#include "peerinf/csv.hpp"
#include "peerinf/embed.hpp"
#include "peerinf/errors.hpp"
#include "peerinf/mecov.hpp"
#include "peerinf/peerlm.hpp"
#include "peerinf/rng.hpp"

namespace peerinf {

Panel simulate_panel(const LatentFactors& factors, const Graph& g, const PanelConfig& cfg,
                     std::uint64_t seed) {
  const int n = static_cast<int>(factors.values.rows());
  if (g.n() != n) throw DataError("simulate_panel: graph and factors disagree on n");
  if (cfg.beta.size() != factors.values.cols())
    throw ConfigError("simulate_panel: beta length must match the latent dimension");
  if (!(cfg.noise_sd > 0.0)) throw ConfigError("simulate_panel: noise_sd must be positive");
  if (!std::isfinite(cfg.alpha) || !std::isfinite(cfg.rho) ||
      !std::isfinite(cfg.prev_multiplier))
    throw ConfigError("simulate_panel: coefficients must be finite");

  auto eng = make_engine(seed);
  Eigen::VectorXd v1(n), v2(n), v3(n);
  for (int i = 0; i < n; ++i) v1(i) = cfg.noise_sd * rnorm(eng);
  for (int i = 0; i < n; ++i) v2(i) = cfg.noise_sd * rnorm(eng);
  for (int i = 0; i < n; ++i) v3(i) = cfg.noise_sd * rnorm(eng);

  Eigen::VectorXd ub = factors.values * cfg.beta;

  Panel p;
  p.y1 = v1;
  p.y2 = cfg.prev_multiplier * ub + cfg.alpha * p.y1 + v2;

  Eigen::VectorXd ly2 = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double degree = g.weights.row(i).sum();
    if (degree > 0.0) ly2(i) = g.weights.row(i).dot(p.y2) / degree;
  }
  p.y3 = cfg.alpha * p.y2 + ub + cfg.rho * ly2 + v3;
  return p;
}

void StudyConfig::validate() const {
  if (sweep.empty()) throw ConfigError("study: sweep must be nonempty");
  if (reps < 1) throw ConfigError("study: reps must be at least 1");
  if (threads < 1) throw ConfigError("study: threads must be at least 1");
  if (!std::isfinite(alpha) || !std::isfinite(rho))
    throw ConfigError("study: alpha and rho must be finite");
  if (beta.size() != 2) throw ConfigError("study: beta must have two entries");
  if (!(noise_sd > 0.0)) throw ConfigError("study: noise_sd must be positive");
  for (double v : sweep) {
    if (!std::isfinite(v)) throw ConfigError("study: sweep values must be finite");
    if (study == Study::A || study == Study::C) {
      if (std::fabs(v - std::round(v)) > 1e-9 || v < 2.0)
        throw ConfigError("study: node-count sweep values must be integers >= 2");
    } else if (study == Study::B) {
      if (v <= 0.0 || v >= 1.0)
        throw ConfigError("study: density sweep values must lie in (0,1)");
    }
  }
}

StudyConfig default_study_config(Study study, std::uint64_t seed) {
  StudyConfig cfg;
  cfg.study = study;
  cfg.seed = seed;
  cfg.beta.resize(2);
  cfg.beta << 1.0, 3.0;
  switch (study) {
    case Study::A:
      for (int n = 100; n <= 800; n += 100) cfg.sweep.push_back(n);
      break;
    case Study::B:
      for (int i = 1; i <= 8; ++i) cfg.sweep.push_back(i * 0.05);
      break;
    case Study::C:
      cfg.beta(1) = 2.0;
      for (int n = 100; n <= 800; n += 100) cfg.sweep.push_back(n);
      break;
    case Study::D:
      for (int i = 0; i <= 8; ++i) cfg.sweep.push_back((i - 4) * 0.25);
      break;
  }
  return cfg;
}

namespace {

struct PointSpec {
  LatentConfig latent;
  PanelConfig panel;
  bool sbm_cov = false;
  int clusters = 0;
};

PointSpec make_point(const StudyConfig& cfg, double sweep_value) {
  PointSpec spec;
  spec.panel.alpha = cfg.alpha;
  spec.panel.rho = cfg.rho;
  spec.panel.beta = cfg.beta;
  spec.panel.noise_sd = cfg.noise_sd;

  LatentConfig& lc = spec.latent;
  lc.d = 2;
  lc.cluster_directions.resize(2, 2);
  lc.cluster_directions << 0.5, 0.1, 0.1, 0.5;
  lc.cluster_probs = Eigen::VectorXd::Constant(2, 0.5);

  switch (cfg.study) {
    case Study::A:
      lc.n = static_cast<int>(std::llround(sweep_value));
      lc.kind = LatentKind::Dcsbm;
      lc.degree_log_sd = 0.5;
      lc.target_density = 0.20;
      break;
    case Study::B:
      lc.n = 200;
      lc.kind = LatentKind::Dcsbm;
      lc.degree_log_sd = 0.5;
      lc.target_density = sweep_value;
      break;
    case Study::C:
      lc.n = static_cast<int>(std::llround(sweep_value));
      lc.kind = LatentKind::Sbm;
      lc.cluster_directions.resize(4, 2);
      lc.cluster_directions << 0.7, 0.2, 0.1, 0.6, 0.2, 0.2, 0.5, 0.5;
      lc.cluster_probs = Eigen::VectorXd::Constant(4, 0.25);
      spec.sbm_cov = true;
      spec.clusters = 4;
      break;
    case Study::D:
      lc.n = 200;
      lc.kind = LatentKind::Sbm;
      spec.panel.prev_multiplier = sweep_value;
      break;
  }
  return spec;
}

struct RepOutcome {
  double no_latent = 0.0;
  double uncorrected = 0.0;
  double corrected = 0.0;
  int resamples = 0;
};

RepOutcome run_rep(const PointSpec& spec, std::uint64_t rep_seed) {
  for (int attempt = 0; attempt < 10; ++attempt) {
    const std::uint64_t s =
        attempt == 0 ? rep_seed : sub_seed(rep_seed, 100 + static_cast<std::uint64_t>(attempt));
    try {
      LatentConfig lc = spec.latent;
      lc.seed = sub_seed(s, 0);
      LatentFactors fac =
          lc.kind == LatentKind::Dcsbm ? build_dcsbm_factors(lc) : build_sbm_factors(lc);
      Graph g = gen_rdpg(fac, sub_seed(s, 1));
      Panel panel = simulate_panel(fac, g, spec.panel, sub_seed(s, 2));

      const int n = g.n();
      DesignMatrix design;
      design.w.resize(n, 3);
      design.w_labels = {"intercept", "lag_outcome", "peer_lagged_outcome"};
      design.w.col(0).setOnes();
      design.w.col(1) = panel.y2;
      for (int i = 0; i < n; ++i) {
        const double degree = g.weights.row(i).sum();
        design.w(i, 2) = degree > 0.0 ? g.weights.row(i).dot(panel.y2) / degree : 0.0;
      }

      RepOutcome out;
      out.resamples = attempt;
      out.no_latent = fit_ols(design, panel.y3).rho_hat();

      Embedding emb = ase(g, lc.d);
      design.uhat = emb.uhat;
      out.uncorrected = fit_ols(design, panel.y3).rho_hat();

      NodeCovariances cov =
          spec.sbm_cov ? delta_sbm(emb, spec.clusters, sub_seed(s, 3)) : delta_rdpg(emb);
      out.corrected =
          fit_bias_corrected(design, panel.y3, assemble_omega(cov, 3)).rho_hat();
      return out;
    } catch (const std::exception&) {
      continue;
    }
  }
  throw NumericalError("run_study: a replicate failed after 10 seed attempts");
}

}  // namespace

BiasTable run_study(const StudyConfig& cfg) {
  cfg.validate();

  BiasTable table;
  long total_resamples = 0;
  const long allowed = static_cast<long>(
      std::floor(0.05 * static_cast<double>(cfg.reps) * static_cast<double>(cfg.sweep.size())));

  for (size_t sw = 0; sw < cfg.sweep.size(); ++sw) {
    const PointSpec spec = make_point(cfg, cfg.sweep[sw]);
    const std::uint64_t point_seed = sub_seed(cfg.seed, static_cast<std::uint64_t>(sw));

    std::vector<RepOutcome> slots(static_cast<size_t>(cfg.reps));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(cfg.reps));
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= cfg.reps) return;
        try {
          slots[static_cast<size_t>(r)] =
              run_rep(spec, sub_seed(point_seed, static_cast<std::uint64_t>(r)));
        } catch (...) {
          errors[static_cast<size_t>(r)] = std::current_exception();
        }
      }
    };
    if (cfg.threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < cfg.threads; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    for (const auto& err : errors)
      if (err) std::rethrow_exception(err);

    double sums[3] = {0.0, 0.0, 0.0};
    for (const auto& slot : slots) {
      sums[0] += slot.no_latent;
      sums[1] += slot.uncorrected;
      sums[2] += slot.corrected;
      total_resamples += slot.resamples;
    }
    if (total_resamples > allowed)
      throw NumericalError("run_study: replicate resample rate exceeded 5%");

    const char* methods[3] = {"no-latent", "ase-uncorrected", "bias-corrected"};
    for (int m = 0; m < 3; ++m) {
      const double mean = sums[m] / cfg.reps;
      double var = 0.0;
      for (const auto& slot : slots) {
        const double v = m == 0 ? slot.no_latent : m == 1 ? slot.uncorrected : slot.corrected;
        var += (v - mean) * (v - mean);
      }
      BiasRow row;
      row.sweep = cfg.sweep[sw];
      row.method = methods[m];
      row.mean_rho_hat = mean;
      row.bias = mean - cfg.rho;
      row.mc_se = cfg.reps > 1
                      ? std::sqrt(var / (cfg.reps - 1)) / std::sqrt(static_cast<double>(cfg.reps))
                      : 0.0;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

void save_bias_table_csv(const BiasTable& table, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(table.rows.size());
  for (const auto& r : table.rows)
    rows.push_back({fmt_double(r.sweep), r.method, fmt_double(r.mean_rho_hat),
                    fmt_double(r.bias), fmt_double(r.mc_se)});
  write_csv(path, {"sweep", "method", "mean_rho_hat", "bias", "mc_se"}, rows);
}

}  // namespace peerinf
