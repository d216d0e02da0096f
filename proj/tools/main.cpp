// peerinf: command-line front end for the peer-influence estimation library.
//
// Subcommands: simulate, embed, estimate, counterfactual, gen-synthetic.
// Every run writes its outputs plus a manifest.json echoing the effective
// configuration, so the command can be reproduced exactly. All randomness
// flows from --seed; repeated runs with the same flags produce byte-identical
// output files (wall-clock timing goes to stderr only).
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

#include <CLI11.hpp>

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "peerinf/counterfact.hpp"
#include "peerinf/csv.hpp"
#include "peerinf/embed.hpp"
#include "peerinf/errors.hpp"
#include "peerinf/graph.hpp"
#include "peerinf/mecov.hpp"
#include "peerinf/peerlm.hpp"
#include "peerinf/rng.hpp"
#include "peerinf/simlab.hpp"
#include "peerinf/tcdata.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace peerinf;

namespace {

constexpr const char* kVersion = "1.0.0";

// Flat key=value config support: every long flag of the chosen subcommand
// can appear as "key=value" (booleans as true/false, lists comma-separated).
// Values from the file are appended as --key=value arguments for keys the
// command line did not set, so explicit flags always override the file.
std::vector<std::string> expand_config_args(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      break;
    }
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot open config file " + config_path);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t");
    line = line.substr(first, last - first + 1);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError(config_path + ":" + std::to_string(line_no) +
                        ": expected key=value");
    const std::string key = line.substr(0, line.find_last_not_of(" \t", eq - 1) + 1);
    auto vstart = line.find_first_not_of(" \t", eq + 1);
    const std::string value = vstart == std::string::npos ? "" : line.substr(vstart);
    if (key == "config")
      throw ConfigError(config_path + ": config files cannot nest");
    bool given = false;
    for (const std::string& a : args)
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) given = true;
    if (!given) args.push_back("--" + key + "=" + value);
  }
  return args;
}

void emit_error_json(const std::string& type, const std::string& message, int code) {
  ordered_json j;
  j["error"]["type"] = type;
  j["error"]["message"] = message;
  j["error"]["exit_code"] = code;
  std::fprintf(stderr, "%s\n", j.dump().c_str());
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    std::uint64_t seed, const ordered_json& options,
                    const std::vector<std::string>& outputs) {
  ordered_json j;
  j["tool"] = "peerinf";
  j["version"] = kVersion;
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
               std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["options"] = options;
  j["outputs"] = outputs;
  std::ofstream f(out_dir / "manifest.json");
  if (!f) throw DataError("cannot write " + (out_dir / "manifest.json").string());
  f << j.dump(2) << "\n";
  if (!f) throw DataError("failed while writing manifest.json");
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path p(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p))
    throw ConfigError("output directory '" + out + "' is not writable");
  return p;
}

std::string study_name(Study s) {
  switch (s) {
    case Study::A: return "A";
    case Study::B: return "B";
    case Study::C: return "C";
    default: return "D";
  }
}

Study parse_study(const std::string& s) {
  if (s == "A") return Study::A;
  if (s == "B") return Study::B;
  if (s == "C") return Study::C;
  if (s == "D") return Study::D;
  throw ConfigError("unknown study '" + s + "' (expected A, B, C, or D)");
}

// Options shared by estimate and counterfactual (the estimation pipeline).
struct EstimateOpts {
  std::string residents;
  std::string events;
  std::string out;
  std::uint64_t seed = 0;
  int d = 2;
  bool select_d = false;
  int k_clusters = 4;
  std::string cov = "rdpg";
  std::string definition = "def1";
  bool binarize = false;
  bool race_interactions = false;
  bool logistic = false;
  bool sender_only = false;
};

void add_config_option(CLI::App* cmd, std::string& sink) {
  cmd->add_option("--config", sink,
                  "key=value config file mirroring the flags; flags override");
}

void add_estimate_options(CLI::App* cmd, EstimateOpts& o, bool allow_race) {
  cmd->add_option("--residents", o.residents, "residents CSV path")->required();
  cmd->add_option("--events", o.events, "events CSV path")->required();
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--seed", o.seed, "master random seed");
  cmd->add_option("--d", o.d, "embedding dimension")->check(CLI::PositiveNumber);
  cmd->add_flag("--select-d", o.select_d,
                "choose the embedding dimension by link-prediction AUC");
  cmd->add_option("--k-clusters", o.k_clusters,
                  "cluster count for the sbm covariance variant")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--cov", o.cov, "error-covariance variant")
      ->check(CLI::IsMember({"rdpg", "sbm"}));
  cmd->add_option("--definition", o.definition, "peer-exposure definition")
      ->check(CLI::IsMember({"def1", "def2"}));
  cmd->add_flag("--binarize", o.binarize, "binarize the affirmation counts");
  cmd->add_flag("--sender-only", o.sender_only,
                "weight exposures by events the peer sent to the ego");
  if (allow_race) {
    cmd->add_flag("--race-interactions", o.race_interactions,
                  "race-stratified exposures with own-race interactions");
    cmd->add_flag("--logistic", o.logistic,
                  "also fit the logistic model with average marginal effects");
  }
}

ordered_json estimate_options_json(const EstimateOpts& o) {
  ordered_json j;
  j["residents"] = o.residents;
  j["events"] = o.events;
  j["out"] = o.out;
  j["seed"] = o.seed;
  j["d"] = o.d;
  j["select_d"] = o.select_d;
  j["k_clusters"] = o.k_clusters;
  j["cov"] = o.cov;
  j["definition"] = o.definition;
  j["binarize"] = o.binarize;
  j["race_interactions"] = o.race_interactions;
  j["logistic"] = o.logistic;
  j["sender_only"] = o.sender_only;
  return j;
}

// Everything the estimation pipeline produces that downstream steps reuse.
struct EstimatePipeline {
  TcDataset ds;
  Embedding emb;
  AucCurve auc;  // populated only under --select-d
  int d_used = 0;
  Eigen::MatrixXd omega;
  DesignMatrix design_latent;  // ds.design plus the latent block
  EstimateReport ols;
  EstimateReport homophily;
  EstimateReport corrected;
};

EstimatePipeline run_estimate_pipeline(const EstimateOpts& o) {
  EstimatePipeline p;
  ResidentTable residents = load_residents_csv(o.residents);
  EventLog events = load_events_csv(o.events);

  TcDesignOptions dopts;
  dopts.definition = o.definition;
  dopts.race_interactions = o.race_interactions;
  dopts.binarize = o.binarize;
  dopts.sender_only = o.sender_only;
  p.ds = build_tc_dataset(residents, events, dopts);

  p.d_used = o.d;
  if (o.select_d) {
    std::vector<int> candidates;
    for (int c = 1; c <= std::min(8, p.ds.universe.n() - 1); ++c)
      candidates.push_back(c);
    p.auc = select_dim_auc(p.ds.graph, candidates, 0.1, 5, sub_seed(o.seed, 0));
    p.d_used = p.auc.chosen_d;
  }
  if (p.d_used >= p.ds.universe.n())
    throw ConfigError("embedding dimension must be below the universe size");

  p.emb = ase(p.ds.graph, p.d_used);
  NodeCovariances cov = o.cov == "rdpg"
                            ? delta_rdpg(p.emb)
                            : delta_sbm(p.emb, o.k_clusters, sub_seed(o.seed, 1));
  const int q = static_cast<int>(p.ds.design.w.cols());
  p.omega = assemble_omega(cov, q, p.ds.rows);

  Eigen::MatrixXd usub(static_cast<int>(p.ds.rows.size()), p.emb.d());
  for (size_t k = 0; k < p.ds.rows.size(); ++k)
    usub.row(static_cast<int>(k)) = p.emb.uhat.row(p.ds.rows[k]);
  p.design_latent = p.ds.design;
  p.design_latent.uhat = usub;

  p.ols = fit_ols(p.ds.design, p.ds.outcome);
  p.homophily = fit_ols(p.design_latent, p.ds.outcome);
  p.homophily.method = "homophily-ols";
  p.corrected = fit_bias_corrected(p.design_latent, p.ds.outcome, p.omega);
  return p;
}

void save_report(const EstimateReport& r, const fs::path& out_dir,
                 const std::string& stem, std::vector<std::string>& outputs) {
  {
    std::ofstream f(out_dir / (stem + ".json"));
    if (!f) throw DataError("cannot write " + (out_dir / (stem + ".json")).string());
    f << report_to_json(r).dump(2) << "\n";
  }
  save_estimate_csv(r, out_dir / (stem + ".csv"));
  outputs.push_back(stem + ".json");
  outputs.push_back(stem + ".csv");
}

std::string percentile_label(double p) {
  const long rounded = std::lround(p);
  if (std::abs(p - static_cast<double>(rounded)) < 1e-9)
    return std::to_string(rounded);
  std::string s = fmt_double(p);
  for (char& c : s)
    if (c == '.') c = '_';
  return s;
}

int cmd_simulate(const std::string& study, int reps, std::uint64_t seed, int threads,
                 const std::string& out) {
  fs::path out_dir = prepare_out_dir(out);
  StudyConfig cfg = default_study_config(parse_study(study), seed);
  if (reps > 0) cfg.reps = reps;
  if (threads > 0) cfg.threads = threads;
  cfg.validate();

  const auto t0 = std::chrono::steady_clock::now();
  BiasTable table = run_study(cfg);
  const auto t1 = std::chrono::steady_clock::now();
  std::fprintf(stderr, "simulate: study %s, %d reps, %.1f s\n", study.c_str(), cfg.reps,
               std::chrono::duration<double>(t1 - t0).count());

  save_bias_table_csv(table, out_dir / "bias_table.csv");
  ordered_json opts;
  opts["study"] = study;
  opts["reps"] = cfg.reps;
  opts["threads"] = cfg.threads;
  opts["out"] = out;
  write_manifest(out_dir, "simulate", seed, opts, {"bias_table.csv"});
  return 0;
}

int cmd_gen_synthetic(int n, double rho, std::uint64_t seed, const std::string& out) {
  fs::path out_dir = prepare_out_dir(out);
  SyntheticTcConfig cfg;
  cfg.n = n;
  cfg.rho = rho;
  cfg.seed = seed;
  SyntheticTc unit = gen_synthetic_tc(cfg);
  save_residents_csv(unit.residents, out_dir / "residents.csv");
  save_events_csv(unit.events, out_dir / "events.csv");
  save_synthetic_truth_json(unit, cfg, out_dir / "truth.json");
  ordered_json opts;
  opts["n"] = n;
  opts["rho"] = rho;
  opts["out"] = out;
  write_manifest(out_dir, "gen-synthetic", seed, opts,
                 {"residents.csv", "events.csv", "truth.json"});
  return 0;
}

int cmd_embed(const std::string& residents, const std::string& events,
              const std::string& graph_path, int d, bool select_d, bool binarize,
              std::uint64_t seed, const std::string& out) {
  fs::path out_dir = prepare_out_dir(out);
  const bool have_tc = !residents.empty() || !events.empty();
  if (have_tc == !graph_path.empty())
    throw ConfigError(
        "embed needs either --residents with --events, or --graph, not both");

  Graph g;
  std::vector<std::string> outputs;
  if (have_tc) {
    if (residents.empty() || events.empty())
      throw ConfigError("embed needs both --residents and --events");
    ResidentTable table = load_residents_csv(residents);
    EventLog log = load_events_csv(events);
    g = build_adjacency(log, table, binarize);
    write_csv(out_dir / "nodes.csv", {"id"}, [&] {
      std::vector<std::vector<std::string>> rows;
      for (const Resident& r : table.residents) rows.push_back({r.id});
      return rows;
    }());
    outputs.push_back("nodes.csv");
  } else {
    g = load_graph_edges(graph_path);
  }

  int d_used = d;
  AucCurve auc;
  if (select_d) {
    std::vector<int> candidates;
    for (int c = 1; c <= std::min(8, g.n() - 1); ++c) candidates.push_back(c);
    auc = select_dim_auc(g, candidates, 0.1, 5, sub_seed(seed, 0));
    d_used = auc.chosen_d;
    save_auc_csv(auc, out_dir / "auc.csv");
    outputs.push_back("auc.csv");
  }
  if (d_used >= g.n())
    throw ConfigError("embedding dimension must be below the node count");

  Embedding emb = ase(g, d_used);
  save_embedding_csv(emb, out_dir / "embedding.csv");
  outputs.insert(outputs.begin(), "embedding.csv");

  ordered_json opts;
  opts["residents"] = residents;
  opts["events"] = events;
  opts["graph"] = graph_path;
  opts["d"] = d;
  opts["select_d"] = select_d;
  opts["d_used"] = d_used;
  opts["binarize"] = binarize;
  opts["out"] = out;
  write_manifest(out_dir, "embed", seed, opts, outputs);
  return 0;
}

int cmd_estimate(const EstimateOpts& o) {
  fs::path out_dir = prepare_out_dir(o.out);
  const auto t0 = std::chrono::steady_clock::now();
  EstimatePipeline p = run_estimate_pipeline(o);

  std::vector<std::string> outputs;
  save_report(p.ols, out_dir, "report_ols", outputs);
  save_report(p.homophily, out_dir, "report_homophily_ols", outputs);
  save_report(p.corrected, out_dir, "report_bias_corrected", outputs);
  if (o.logistic) {
    EstimateReport logit = fit_logistic_ame(p.design_latent, p.ds.outcome);
    save_report(logit, out_dir, "report_logistic_ame", outputs);
  }
  save_embedding_csv(p.emb, out_dir / "embedding.csv");
  outputs.push_back("embedding.csv");
  if (o.select_d) {
    save_auc_csv(p.auc, out_dir / "auc.csv");
    outputs.push_back("auc.csv");
  }
  save_exposures_csv(p.ds.exposures, p.ds.universe, out_dir / "exposures.csv");
  outputs.push_back("exposures.csv");

  ordered_json opts = estimate_options_json(o);
  opts["d_used"] = p.d_used;
  opts["n_obs"] = static_cast<int>(p.ds.rows.size());
  write_manifest(out_dir, "estimate", o.seed, opts, outputs);

  const auto t1 = std::chrono::steady_clock::now();
  std::fprintf(stderr, "estimate: n=%d rows=%d d=%d, %.2f s\n", p.ds.universe.n(),
               static_cast<int>(p.ds.rows.size()), p.d_used,
               std::chrono::duration<double>(t1 - t0).count());
  return 0;
}

int cmd_counterfactual(const EstimateOpts& o, const std::vector<double>& cutoffs,
                       std::optional<double> buddy_weight, double threshold_grid) {
  fs::path out_dir = prepare_out_dir(o.out);
  EstimatePipeline p = run_estimate_pipeline(o);

  std::vector<std::string> outputs;
  save_report(p.corrected, out_dir, "report_bias_corrected", outputs);

  std::vector<InterventionConfig> runs;
  if (cutoffs.empty()) {
    InterventionConfig cfg;
    cfg.targeting = "true-failures";
    cfg.buddy_weight = buddy_weight;
    cfg.threshold_grid = threshold_grid;
    cfg.seed = o.seed;
    runs.push_back(cfg);
  } else {
    for (double pct : cutoffs) {
      InterventionConfig cfg;
      cfg.targeting = "lsi-percentile";
      cfg.lsi_percentile = pct;
      cfg.buddy_weight = buddy_weight;
      cfg.threshold_grid = threshold_grid;
      cfg.seed = o.seed;
      runs.push_back(cfg);
    }
  }

  std::vector<std::vector<std::string>> summary_rows;
  for (const InterventionConfig& cfg : runs) {
    CascadeReport rep = run_cascade(p.ds, p.emb.uhat, p.omega, p.corrected, cfg);
    const std::string label = cfg.targeting == "true-failures"
                                  ? "true_failures"
                                  : "lsi" + percentile_label(cfg.lsi_percentile);
    save_cascade_json(rep, out_dir / ("cascade_" + label + ".json"));
    outputs.push_back("cascade_" + label + ".json");
    summary_rows.push_back(
        {rep.targeting, fmt_double(rep.lsi_percentile), fmt_double(rep.buddy_weight),
         fmt_double(rep.threshold), std::to_string(rep.treated_count),
         std::to_string(rep.failures_true), std::to_string(rep.below_threshold_pre),
         std::to_string(rep.below_threshold_post)});
  }
  write_csv(out_dir / "cascade_summary.csv",
            {"targeting", "lsi_percentile", "buddy_weight", "threshold", "treated",
             "failures_true", "below_threshold_pre", "below_threshold_post"},
            summary_rows);
  outputs.push_back("cascade_summary.csv");

  ordered_json opts = estimate_options_json(o);
  opts["cutoff_percentiles"] = cutoffs;
  if (buddy_weight.has_value())
    opts["buddy_weight"] = *buddy_weight;
  else
    opts["buddy_weight"] = "unit-median";
  opts["threshold_grid"] = threshold_grid;
  opts["d_used"] = p.d_used;
  write_manifest(out_dir, "counterfactual", o.seed, opts, outputs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"peer-influence estimation on networks with latent-homophily control"};
  app.require_subcommand(1);
  std::string config_sink;  // read by expand_config_args before CLI11 parsing

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo bias study");
  std::string sim_study;
  int sim_reps = 0;
  int sim_threads = 0;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  sim->add_option("--study", sim_study, "study letter")
      ->check(CLI::IsMember({"A", "B", "C", "D"}))
      ->required();
  sim->add_option("--reps", sim_reps, "replicates per sweep point (default 200)");
  sim->add_option("--threads", sim_threads, "worker threads (default 1)");
  sim->add_option("--seed", sim_seed, "master random seed");
  sim->add_option("--out", sim_out, "output directory")->required();
  add_config_option(sim, config_sink);

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic unit");
  int gen_n = 400;
  double gen_rho = 0.5;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--n", gen_n, "number of residents")->check(CLI::PositiveNumber);
  gen->add_option("--rho", gen_rho, "planted peer-exposure coefficient");
  gen->add_option("--seed", gen_seed, "master random seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  add_config_option(gen, config_sink);

  // embed
  auto* emb = app.add_subcommand("embed", "adjacency spectral embedding");
  std::string emb_residents, emb_events, emb_graph, emb_out;
  int emb_d = 2;
  bool emb_select = false, emb_binarize = false;
  std::uint64_t emb_seed = 0;
  emb->add_option("--residents", emb_residents, "residents CSV path");
  emb->add_option("--events", emb_events, "events CSV path");
  emb->add_option("--graph", emb_graph, "edge-list CSV path (src,dst,weight)");
  emb->add_option("--d", emb_d, "embedding dimension")->check(CLI::PositiveNumber);
  emb->add_flag("--select-d", emb_select, "choose dimension by link-prediction AUC");
  emb->add_flag("--binarize", emb_binarize, "binarize the affirmation counts");
  emb->add_option("--seed", emb_seed, "master random seed");
  emb->add_option("--out", emb_out, "output directory")->required();
  add_config_option(emb, config_sink);

  // estimate
  auto* est = app.add_subcommand("estimate", "fit the peer-effect models on TC data");
  EstimateOpts est_opts;
  add_estimate_options(est, est_opts, true);
  add_config_option(est, config_sink);

  // counterfactual
  auto* cf = app.add_subcommand("counterfactual", "buddy-intervention cascade");
  EstimateOpts cf_opts;
  add_estimate_options(cf, cf_opts, false);
  std::vector<double> cf_cutoffs;
  double cf_buddy = -1.0;
  bool cf_buddy_given = false;
  double cf_grid = 0.001;
  cf->add_option("--cutoff-percentile", cf_cutoffs,
                 "LSI percentile cutoff(s); omit for true-failures targeting")
      ->delimiter(',');
  cf->add_option("--buddy-weight", cf_buddy,
                 "buddy affirmation weight (default: unit median edge weight)")
      ->check(CLI::NonNegativeNumber);
  cf->add_option("--threshold-grid", cf_grid, "threshold search resolution");
  add_config_option(cf, config_sink);

  try {
    std::vector<std::string> args = expand_config_args(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
    cf_buddy_given = cf->count("--buddy-weight") > 0;
  } catch (const ConfigError& e) {
    emit_error_json("config", e.what(), 2);
    return 2;
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error_json("config", e.what(), 2);
    return 2;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(sim_study, sim_reps, sim_seed, sim_threads, sim_out);
    if (gen->parsed()) return cmd_gen_synthetic(gen_n, gen_rho, gen_seed, gen_out);
    if (emb->parsed())
      return cmd_embed(emb_residents, emb_events, emb_graph, emb_d, emb_select,
                       emb_binarize, emb_seed, emb_out);
    if (est->parsed()) return cmd_estimate(est_opts);
    if (cf->parsed())
      return cmd_counterfactual(
          cf_opts, cf_cutoffs,
          cf_buddy_given ? std::optional<double>(cf_buddy) : std::nullopt, cf_grid);
    emit_error_json("config", "no subcommand given", 2);
    return 2;
  } catch (const ConfigError& e) {
    emit_error_json("config", e.what(), 2);
    return 2;
  } catch (const DataError& e) {
    emit_error_json("data", e.what(), 3);
    return 3;
  } catch (const NumericalError& e) {
    emit_error_json("numerical", e.what(), 4);
    return 4;
  } catch (const std::exception& e) {
    emit_error_json("internal", e.what(), 1);
    return 1;
  }
}
