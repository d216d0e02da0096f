#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "peerinf/graph.hpp"
#include "peerinf/peerlm.hpp"

namespace peerinf {

// One program resident. Day indices are integers counted from the epoch
// named in the residents file header comment ("# epoch=<label>"); the epoch
// is informational only and never enters any computation.
struct Resident {
  std::string id;
  int entry_day = 0;
  int exit_day = 0;
  int graduated = 0;  // final status S, 1 = graduated
  double age = 0.0;
  int white = 0;
  double lsi = 0.0;  // intake risk score, nonnegative
};

struct ResidentTable {
  std::vector<Resident> residents;
  std::string epoch = "day-0";

  int n() const { return static_cast<int>(residents.size()); }
  // Index of an id, -1 when absent. Linear scan; tables are small.
  int index_of(const std::string& id) const;
  // Unique nonempty ids; exit > entry; stay at most 180 days; graduated and
  // white in {0,1}; age positive; lsi nonnegative.
  void validate() const;
};

// One affirmation/correction record. `row` is the 1-based line number in the
// source file (or the 1-based event index for logs built in memory) and is
// carried so validation errors can name the offending row.
struct Event {
  std::string sender;
  std::string receiver;
  int day = 0;
  long row = 0;
};

enum class EventKind { Affirmations, Corrections };

struct EventLog {
  std::vector<Event> events;
  EventKind kind = EventKind::Affirmations;

  // Every id must be a known resident and sender != receiver; both parties
  // must be in residence on the event day (entry <= day < exit). Errors name
  // the offending row.
  void validate(const ResidentTable& residents) const;
};

// residents CSV: header `id,entry_day,exit_day,graduated,age,white,lsi`,
// optionally preceded by a "# epoch=<label>" comment line.
ResidentTable load_residents_csv(const std::filesystem::path& path);
void save_residents_csv(const ResidentTable& table, const std::filesystem::path& path);

// events CSV: header `sender,receiver,day`.
EventLog load_events_csv(const std::filesystem::path& path,
                         EventKind kind = EventKind::Affirmations);
void save_events_csv(const EventLog& log, const std::filesystem::path& path);

// C(i, j) = number of events sent by i to j, in residents-table order.
// Validates the log against the table first.
Eigen::MatrixXd directed_counts(const EventLog& log, const ResidentTable& residents);

// Undirected affirmation-count adjacency: A_ij = events i->j plus events
// j->i. binarize maps any positive count to 1. Zero diagonal.
Graph build_adjacency(const EventLog& log, const ResidentTable& residents,
                      bool binarize = false);

// S_j when the peer exited strictly before the ego's exit day, else 0
// (exit-day ties count as not observed).
int observed_outcome(const Resident& ego, const Resident& peer);

// Per-resident exposure, aligned with the residents-table order. A value is
// missing exactly when the resident's qualifying peer set is empty.
struct ExposureVector {
  std::vector<std::optional<double>> values;
  std::string definition;  // def1, def2, def1-white, def1-nonwhite
  bool binarized = false;

  int n() const { return static_cast<int>(values.size()); }
};

// Definition 1: weighted mean of the observed outcomes of every network
// neighbor, weights from the ego's row of `ego_weights` (symmetric adjacency
// by default; pass directed_counts(...).transpose() for the sender-only
// reading where ego i weights peer j by what j sent to i).
ExposureVector exposure_def1(const ResidentTable& residents,
                             const Eigen::MatrixXd& ego_weights);
ExposureVector exposure_def1(const ResidentTable& residents, const Graph& g);

// Definition 2: weighted mean of S_j restricted to neighbors who exited
// strictly before the ego; missing when no neighbor did.
ExposureVector exposure_def2(const ResidentTable& residents,
                             const Eigen::MatrixXd& ego_weights);
ExposureVector exposure_def2(const ResidentTable& residents, const Graph& g);

// Definition-1 exposures restricted to white peers and to non-white peers.
std::pair<ExposureVector, ExposureVector> exposure_by_race(
    const ResidentTable& residents, const Eigen::MatrixXd& ego_weights);
std::pair<ExposureVector, ExposureVector> exposure_by_race(
    const ResidentTable& residents, const Graph& g);

// exposures CSV: header `id,definition,value`, one block per vector in the
// given order, empty value field for missing.
void save_exposures_csv(const std::vector<ExposureVector>& exposures,
                        const ResidentTable& residents,
                        const std::filesystem::path& path);

// Estimation dataset assembly -----------------------------------------------

struct TcDesignOptions {
  std::string definition = "def1";  // def1 | def2
  bool race_interactions = false;   // def1-based race-stratified design
  bool binarize = false;            // binarize the adjacency first
  bool sender_only = false;         // exposure weights from received events
};

// The estimation universe keeps every resident with at least one network tie
// (zero-degree residents never have an exposure under any definition); the
// graph and the embedding run over that universe. Estimation rows are the
// universe members whose exposure columns are all present.
struct TcDataset {
  ResidentTable universe;          // non-isolated residents, original order
  std::vector<int> universe_rows;  // their indices in the input table
  Graph graph;                     // adjacency over the universe
  DesignMatrix design;             // non-latent block for estimation rows
  Eigen::VectorXd outcome;         // graduation status for estimation rows
  std::vector<int> rows;           // estimation rows as universe indices
  std::vector<std::string> row_ids;
  std::vector<ExposureVector> exposures;  // over the universe, design order
};

// Design columns: intercept, peer exposure column(s) (plus x-white
// interactions for the race-stratified layout), white, age, lsi.
TcDataset build_tc_dataset(const ResidentTable& residents, const EventLog& log,
                           const TcDesignOptions& opts);

// Synthetic unit generator ----------------------------------------------------

// Shapes mimic the real units: entries uniform over a 3-year window, stays
// clipped normal with median about 150 days and hard cap 180, several
// thousand affirmations at n in the 300-400 range, and a planted linear
// peer effect on graduation propagated sequentially in exit order.
struct SyntheticTcConfig {
  int n = 400;
  double rho = 0.5;            // planted peer-exposure coefficient
  std::uint64_t seed = 0;
  int window_days = 1095;      // entry window
  double event_rate = 0.018;   // per-day, per-pair intensity multiplier
  double prob_floor = 0.02;    // clipping range for planted propensities
  double prob_ceil = 0.98;

  void validate() const;
};

struct SyntheticTc {
  ResidentTable residents;
  EventLog events;
  Eigen::MatrixXd latent;      // true n x 2 latent positions driving ties
  Eigen::VectorXd latent_beta; // outcome loading on the latent positions
  double rho = 0.0;
  double intercept = 0.0;
  double coef_age = 0.0;    // on (age - 35) / 10
  double coef_white = 0.0;  // on the white indicator
  double coef_lsi = 0.0;    // on (lsi - 25) / 10
  int clipped = 0;          // planted propensities that hit the clip range
};

SyntheticTc gen_synthetic_tc(const SyntheticTcConfig& cfg);

// JSON with the generator config echo and every planted coefficient.
void save_synthetic_truth_json(const SyntheticTc& unit, const SyntheticTcConfig& cfg,
                               const std::filesystem::path& path);

}  // namespace peerinf
