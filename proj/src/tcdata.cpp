#include "peerinf/tcdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "peerinf/csv.hpp"
#include "peerinf/errors.hpp"
#include "peerinf/rng.hpp"

namespace peerinf {

namespace {

std::unordered_map<std::string, int> id_index(const ResidentTable& t) {
  std::unordered_map<std::string, int> m;
  m.reserve(t.residents.size());
  for (int i = 0; i < t.n(); ++i) m.emplace(t.residents[i].id, i);
  return m;
}

}  // namespace

int ResidentTable::index_of(const std::string& id) const {
  for (int i = 0; i < n(); ++i)
    if (residents[i].id == id) return i;
  return -1;
}

void ResidentTable::validate() const {
  std::unordered_set<std::string> seen;
  for (size_t k = 0; k < residents.size(); ++k) {
    const Resident& r = residents[k];
    const std::string where =
        "resident " + std::to_string(k + 1) + (r.id.empty() ? "" : " (" + r.id + ")");
    if (r.id.empty()) throw DataError(where + ": empty id");
    if (!seen.insert(r.id).second) throw DataError(where + ": duplicate id");
    if (r.exit_day <= r.entry_day)
      throw DataError(where + ": exit_day must exceed entry_day");
    if (r.exit_day - r.entry_day > 180)
      throw DataError(where + ": stay exceeds the 180-day maximum");
    if (r.graduated != 0 && r.graduated != 1)
      throw DataError(where + ": graduated must be 0 or 1");
    if (r.white != 0 && r.white != 1) throw DataError(where + ": white must be 0 or 1");
    if (!std::isfinite(r.age) || r.age <= 0.0)
      throw DataError(where + ": age must be positive");
    if (!std::isfinite(r.lsi) || r.lsi < 0.0)
      throw DataError(where + ": lsi must be nonnegative");
  }
}

void EventLog::validate(const ResidentTable& residents) const {
  auto idx = id_index(residents);
  for (const Event& e : events) {
    const std::string where = "event row " + std::to_string(e.row);
    auto si = idx.find(e.sender);
    if (si == idx.end()) throw DataError(where + ": unknown sender '" + e.sender + "'");
    auto ri = idx.find(e.receiver);
    if (ri == idx.end())
      throw DataError(where + ": unknown receiver '" + e.receiver + "'");
    if (e.sender == e.receiver) throw DataError(where + ": sender equals receiver");
    const Resident& s = residents.residents[static_cast<size_t>(si->second)];
    const Resident& r = residents.residents[static_cast<size_t>(ri->second)];
    if (e.day < s.entry_day || e.day >= s.exit_day)
      throw DataError(where + ": sender '" + e.sender + "' not in residence on day " +
                      std::to_string(e.day));
    if (e.day < r.entry_day || e.day >= r.exit_day)
      throw DataError(where + ": receiver '" + e.receiver + "' not in residence on day " +
                      std::to_string(e.day));
  }
}

ResidentTable load_residents_csv(const std::filesystem::path& path) {
  CsvTable t = read_csv(path);
  require_header(t, {"id", "entry_day", "exit_day", "graduated", "age", "white", "lsi"},
                 path.string());
  ResidentTable out;
  for (const std::string& c : t.comments) {
    const auto pos = c.find("epoch=");
    if (pos != std::string::npos) out.epoch = c.substr(pos + 6);
  }
  out.residents.reserve(t.rows.size());
  for (size_t k = 0; k < t.rows.size(); ++k) {
    const auto& f = t.rows[k];
    const std::string where = path.string() + ":" + std::to_string(t.lines[k]);
    if (f.size() != 7) throw DataError(where + ": expected 7 fields, got " +
                                       std::to_string(f.size()));
    Resident r;
    r.id = f[0];
    r.entry_day = static_cast<int>(parse_long(f[1], where));
    r.exit_day = static_cast<int>(parse_long(f[2], where));
    r.graduated = static_cast<int>(parse_long(f[3], where));
    r.age = parse_double(f[4], where);
    r.white = static_cast<int>(parse_long(f[5], where));
    r.lsi = parse_double(f[6], where);
    out.residents.push_back(std::move(r));
  }
  out.validate();
  return out;
}

void save_residents_csv(const ResidentTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# epoch=" << table.epoch << "\n";
  out << "id,entry_day,exit_day,graduated,age,white,lsi\n";
  for (const Resident& r : table.residents)
    out << r.id << ',' << r.entry_day << ',' << r.exit_day << ',' << r.graduated << ','
        << fmt_double(r.age) << ',' << r.white << ',' << fmt_double(r.lsi) << "\n";
  if (!out) throw DataError("failed while writing " + path.string());
}

EventLog load_events_csv(const std::filesystem::path& path, EventKind kind) {
  CsvTable t = read_csv(path);
  require_header(t, {"sender", "receiver", "day"}, path.string());
  EventLog log;
  log.kind = kind;
  log.events.reserve(t.rows.size());
  for (size_t k = 0; k < t.rows.size(); ++k) {
    const auto& f = t.rows[k];
    const std::string where = path.string() + ":" + std::to_string(t.lines[k]);
    if (f.size() != 3)
      throw DataError(where + ": expected 3 fields, got " + std::to_string(f.size()));
    Event e;
    e.sender = f[0];
    e.receiver = f[1];
    e.day = static_cast<int>(parse_long(f[2], where));
    e.row = t.lines[k];
    log.events.push_back(std::move(e));
  }
  return log;
}

void save_events_csv(const EventLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "sender,receiver,day\n";
  for (const Event& e : log.events)
    out << e.sender << ',' << e.receiver << ',' << e.day << "\n";
  if (!out) throw DataError("failed while writing " + path.string());
}

Eigen::MatrixXd directed_counts(const EventLog& log, const ResidentTable& residents) {
  residents.validate();
  log.validate(residents);
  const int n = residents.n();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  auto idx = id_index(residents);
  for (const Event& e : log.events)
    c(idx.at(e.sender), idx.at(e.receiver)) += 1.0;
  return c;
}

Graph build_adjacency(const EventLog& log, const ResidentTable& residents, bool binarize) {
  Eigen::MatrixXd c = directed_counts(log, residents);
  Eigen::MatrixXd w = c + c.transpose();
  if (binarize) w = (w.array() > 0.0).cast<double>().matrix();
  return make_graph(std::move(w));
}

int observed_outcome(const Resident& ego, const Resident& peer) {
  return peer.exit_day < ego.exit_day ? peer.graduated : 0;
}

namespace {

using PeerFilter = std::function<bool(const Resident& ego, const Resident& peer)>;
using PeerValue = std::function<double(const Resident& ego, const Resident& peer)>;

ExposureVector exposure_core(const ResidentTable& residents, const Eigen::MatrixXd& w,
                             std::string definition, const PeerFilter& qualifies,
                             const PeerValue& value) {
  const int n = residents.n();
  if (w.rows() != n || w.cols() != n)
    throw ConfigError("exposure: weights must be " + std::to_string(n) + "x" +
                      std::to_string(n) + ", aligned with the resident table");
  if (!w.allFinite() || w.minCoeff() < 0.0)
    throw DataError("exposure: weights must be finite and nonnegative");
  ExposureVector out;
  out.definition = std::move(definition);
  out.values.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Resident& ego = residents.residents[static_cast<size_t>(i)];
    double num = 0.0, den = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double wij = w(i, j);
      if (wij <= 0.0) continue;
      const Resident& peer = residents.residents[static_cast<size_t>(j)];
      if (!qualifies(ego, peer)) continue;
      num += wij * value(ego, peer);
      den += wij;
    }
    if (den > 0.0) out.values[static_cast<size_t>(i)] = num / den;
  }
  return out;
}

bool any_peer(const Resident&, const Resident&) { return true; }

double observed_value(const Resident& ego, const Resident& peer) {
  return static_cast<double>(observed_outcome(ego, peer));
}

}  // namespace

ExposureVector exposure_def1(const ResidentTable& residents,
                             const Eigen::MatrixXd& ego_weights) {
  return exposure_core(residents, ego_weights, "def1", any_peer, observed_value);
}

ExposureVector exposure_def1(const ResidentTable& residents, const Graph& g) {
  return exposure_def1(residents, g.weights);
}

ExposureVector exposure_def2(const ResidentTable& residents,
                             const Eigen::MatrixXd& ego_weights) {
  return exposure_core(
      residents, ego_weights, "def2",
      [](const Resident& ego, const Resident& peer) {
        return peer.exit_day < ego.exit_day;
      },
      [](const Resident&, const Resident& peer) {
        return static_cast<double>(peer.graduated);
      });
}

ExposureVector exposure_def2(const ResidentTable& residents, const Graph& g) {
  return exposure_def2(residents, g.weights);
}

std::pair<ExposureVector, ExposureVector> exposure_by_race(
    const ResidentTable& residents, const Eigen::MatrixXd& ego_weights) {
  ExposureVector white = exposure_core(
      residents, ego_weights, "def1-white",
      [](const Resident&, const Resident& peer) { return peer.white == 1; },
      observed_value);
  ExposureVector nonwhite = exposure_core(
      residents, ego_weights, "def1-nonwhite",
      [](const Resident&, const Resident& peer) { return peer.white == 0; },
      observed_value);
  return {std::move(white), std::move(nonwhite)};
}

std::pair<ExposureVector, ExposureVector> exposure_by_race(const ResidentTable& residents,
                                                           const Graph& g) {
  return exposure_by_race(residents, g.weights);
}

void save_exposures_csv(const std::vector<ExposureVector>& exposures,
                        const ResidentTable& residents,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id,definition,value\n";
  for (const ExposureVector& e : exposures) {
    if (e.n() != residents.n())
      throw ConfigError("save_exposures_csv: exposure length does not match residents");
    for (int i = 0; i < residents.n(); ++i) {
      out << residents.residents[static_cast<size_t>(i)].id << ',' << e.definition << ',';
      const auto& v = e.values[static_cast<size_t>(i)];
      if (v.has_value()) out << fmt_double(*v);
      out << "\n";
    }
  }
  if (!out) throw DataError("failed while writing " + path.string());
}

TcDataset build_tc_dataset(const ResidentTable& residents, const EventLog& log,
                           const TcDesignOptions& opts) {
  if (opts.definition != "def1" && opts.definition != "def2")
    throw ConfigError("build_tc_dataset: definition must be def1 or def2");
  if (opts.race_interactions && opts.definition != "def1")
    throw ConfigError("build_tc_dataset: the race-stratified design uses the def1 exposure");
  Graph full = build_adjacency(log, residents, opts.binarize);

  TcDataset ds;
  for (int i = 0; i < residents.n(); ++i)
    if (full.weights.row(i).sum() > 0.0) ds.universe_rows.push_back(i);
  if (ds.universe_rows.empty())
    throw DataError("build_tc_dataset: every resident is isolated; nothing to estimate");
  const int m = static_cast<int>(ds.universe_rows.size());
  ds.universe.epoch = residents.epoch;
  ds.universe.residents.reserve(static_cast<size_t>(m));
  for (int i : ds.universe_rows)
    ds.universe.residents.push_back(residents.residents[static_cast<size_t>(i)]);

  Eigen::MatrixXd sub(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      sub(a, b) = full.weights(ds.universe_rows[static_cast<size_t>(a)],
                               ds.universe_rows[static_cast<size_t>(b)]);
  ds.graph = make_graph(std::move(sub));

  Eigen::MatrixXd ego_w;
  if (opts.sender_only) {
    Eigen::MatrixXd c = directed_counts(log, residents);
    ego_w.resize(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        ego_w(a, b) = c(ds.universe_rows[static_cast<size_t>(b)],
                        ds.universe_rows[static_cast<size_t>(a)]);
    if (opts.binarize) ego_w = (ego_w.array() > 0.0).cast<double>().matrix();
  } else {
    ego_w = ds.graph.weights;
  }

  if (opts.race_interactions) {
    auto [white, nonwhite] = exposure_by_race(ds.universe, ego_w);
    ds.exposures = {std::move(white), std::move(nonwhite)};
  } else if (opts.definition == "def1") {
    ds.exposures = {exposure_def1(ds.universe, ego_w)};
  } else {
    ds.exposures = {exposure_def2(ds.universe, ego_w)};
  }
  for (ExposureVector& e : ds.exposures) e.binarized = opts.binarize;

  for (int u = 0; u < m; ++u) {
    bool complete = true;
    for (const ExposureVector& e : ds.exposures)
      if (!e.values[static_cast<size_t>(u)].has_value()) complete = false;
    if (complete) ds.rows.push_back(u);
  }
  if (ds.rows.empty())
    throw DataError("build_tc_dataset: no resident has a complete exposure set");

  std::vector<std::string> labels = {"intercept"};
  if (opts.race_interactions)
    labels.insert(labels.end(),
                  {"peer_exposure_def1_white", "peer_exposure_def1_nonwhite",
                   "peer_exposure_def1_white_x_white", "peer_exposure_def1_nonwhite_x_white"});
  else
    labels.push_back("peer_exposure_" + opts.definition);
  labels.insert(labels.end(), {"white", "age", "lsi"});

  const int q = static_cast<int>(labels.size());
  const int nrows = static_cast<int>(ds.rows.size());
  ds.design.w.resize(nrows, q);
  ds.design.w_labels = labels;
  ds.outcome.resize(nrows);
  ds.row_ids.reserve(static_cast<size_t>(nrows));
  for (int k = 0; k < nrows; ++k) {
    const int u = ds.rows[static_cast<size_t>(k)];
    const Resident& r = ds.universe.residents[static_cast<size_t>(u)];
    int col = 0;
    ds.design.w(k, col++) = 1.0;
    if (opts.race_interactions) {
      const double ew = *ds.exposures[0].values[static_cast<size_t>(u)];
      const double en = *ds.exposures[1].values[static_cast<size_t>(u)];
      ds.design.w(k, col++) = ew;
      ds.design.w(k, col++) = en;
      ds.design.w(k, col++) = ew * r.white;
      ds.design.w(k, col++) = en * r.white;
    } else {
      ds.design.w(k, col++) = *ds.exposures[0].values[static_cast<size_t>(u)];
    }
    ds.design.w(k, col++) = static_cast<double>(r.white);
    ds.design.w(k, col++) = r.age;
    ds.design.w(k, col++) = r.lsi;
    ds.outcome(k) = static_cast<double>(r.graduated);
    ds.row_ids.push_back(r.id);
  }
  return ds;
}

void SyntheticTcConfig::validate() const {
  if (n < 10) throw ConfigError("gen_synthetic_tc: n must be at least 10");
  if (window_days < 181)
    throw ConfigError("gen_synthetic_tc: window_days must be at least 181");
  if (!(event_rate > 0.0) || event_rate >= 1.0)
    throw ConfigError("gen_synthetic_tc: event_rate must lie in (0,1)");
  if (!(prob_floor >= 0.0) || !(prob_floor < prob_ceil) || !(prob_ceil <= 1.0))
    throw ConfigError("gen_synthetic_tc: require 0 <= prob_floor < prob_ceil <= 1");
  if (!std::isfinite(rho)) throw ConfigError("gen_synthetic_tc: rho must be finite");
}

SyntheticTc gen_synthetic_tc(const SyntheticTcConfig& cfg) {
  cfg.validate();
  SyntheticTc out;
  out.rho = cfg.rho;
  out.intercept = 0.38;
  out.coef_age = -0.05;
  out.coef_white = 0.05;
  out.coef_lsi = -0.12;
  out.latent_beta.resize(2);
  out.latent_beta << 0.5, -0.5;

  const double pi = std::acos(-1.0);
  const int width = static_cast<int>(std::to_string(cfg.n).size());

  auto eng_res = make_engine(sub_seed(cfg.seed, 0));
  out.latent.resize(cfg.n, 2);
  out.residents.residents.reserve(static_cast<size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    Resident r;
    std::string num = std::to_string(i + 1);
    r.id = "r" + std::string(static_cast<size_t>(width) - num.size(), '0') + num;
    const long stay =
        std::clamp(std::lround(rnorm(eng_res, 148.0, 30.0)), 30L, 180L);
    r.entry_day = rindex(eng_res, cfg.window_days + 1);
    r.exit_day = r.entry_day + static_cast<int>(stay);
    const double phi = 0.15 + runif(eng_res) * (pi / 2.0 - 0.3);
    const double rad = 0.45 + runif(eng_res) * 0.4;
    out.latent(i, 0) = rad * std::cos(phi);
    out.latent(i, 1) = rad * std::sin(phi);
    r.white = runif(eng_res) < (phi < pi / 4.0 ? 0.65 : 0.30) ? 1 : 0;
    r.age = std::clamp(rnorm(eng_res, 35.0, 9.0), 18.0, 65.0);
    r.lsi = std::clamp(rnorm(eng_res, 25.0, 6.0), 5.0, 50.0);
    out.residents.residents.push_back(std::move(r));
  }

  auto eng_ev = make_engine(sub_seed(cfg.seed, 1));
  out.events.kind = EventKind::Affirmations;
  long row = 0;
  for (int i = 0; i < cfg.n; ++i) {
    const Resident& a = out.residents.residents[static_cast<size_t>(i)];
    for (int j = 0; j < cfg.n; ++j) {
      if (j == i) continue;
      const Resident& b = out.residents.residents[static_cast<size_t>(j)];
      const int lo = std::max(a.entry_day, b.entry_day);
      const int hi = std::min(a.exit_day, b.exit_day);
      const int overlap = hi - lo;
      if (overlap <= 0) continue;
      const double p = cfg.event_rate * out.latent.row(i).dot(out.latent.row(j));
      int sent = 0;
      for (int t = 0; t < overlap; ++t)
        if (runif(eng_ev) < p) ++sent;
      for (int k = 0; k < sent; ++k) {
        Event e;
        e.sender = a.id;
        e.receiver = b.id;
        e.day = lo + rindex(eng_ev, overlap);
        e.row = ++row;
        out.events.events.push_back(std::move(e));
      }
    }
  }

  // Plant graduation sequentially in exit order so each resident's exposure
  // is a function of already-decided peer outcomes only.
  Graph g = build_adjacency(out.events, out.residents, false);
  std::vector<int> order(static_cast<size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    const Resident& rx = out.residents.residents[static_cast<size_t>(x)];
    const Resident& ry = out.residents.residents[static_cast<size_t>(y)];
    return rx.exit_day != ry.exit_day ? rx.exit_day < ry.exit_day : rx.id < ry.id;
  });
  auto eng_out = make_engine(sub_seed(cfg.seed, 2));
  for (int i : order) {
    const Resident& ego = out.residents.residents[static_cast<size_t>(i)];
    double num = 0.0, den = 0.0;
    for (int j = 0; j < cfg.n; ++j) {
      const double w = g.weights(i, j);
      if (w <= 0.0) continue;
      const Resident& peer = out.residents.residents[static_cast<size_t>(j)];
      den += w;
      if (peer.exit_day < ego.exit_day) num += w * peer.graduated;
    }
    const double exposure = den > 0.0 ? num / den : 0.0;
    double prob = out.intercept + cfg.rho * exposure +
                  out.latent.row(i).dot(out.latent_beta) +
                  out.coef_age * (ego.age - 35.0) / 10.0 + out.coef_white * ego.white +
                  out.coef_lsi * (ego.lsi - 25.0) / 10.0;
    const double clipped = std::clamp(prob, cfg.prob_floor, cfg.prob_ceil);
    if (clipped != prob) ++out.clipped;
    out.residents.residents[static_cast<size_t>(i)].graduated =
        runif(eng_out) < clipped ? 1 : 0;
  }
  return out;
}

void save_synthetic_truth_json(const SyntheticTc& unit, const SyntheticTcConfig& cfg,
                               const std::filesystem::path& path) {
  nlohmann::json j;
  j["config"] = {{"n", cfg.n},
                 {"rho", cfg.rho},
                 {"seed", cfg.seed},
                 {"window_days", cfg.window_days},
                 {"event_rate", cfg.event_rate},
                 {"prob_floor", cfg.prob_floor},
                 {"prob_ceil", cfg.prob_ceil}};
  int graduated = 0;
  for (const Resident& r : unit.residents.residents) graduated += r.graduated;
  j["truth"] = {{"rho", unit.rho},
                {"intercept", unit.intercept},
                {"coef_age", unit.coef_age},
                {"coef_white", unit.coef_white},
                {"coef_lsi", unit.coef_lsi},
                {"latent_beta", {unit.latent_beta(0), unit.latent_beta(1)}},
                {"clipped", unit.clipped},
                {"n_events", unit.events.events.size()},
                {"graduation_rate",
                 static_cast<double>(graduated) / unit.residents.residents.size()}};
  std::ofstream outf(path);
  if (!outf) throw DataError("cannot write " + path.string());
  outf << j.dump(2) << "\n";
  if (!outf) throw DataError("failed while writing " + path.string());
}

}  // namespace peerinf
