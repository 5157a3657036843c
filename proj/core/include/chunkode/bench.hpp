#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "chunkode/adjoint.hpp"
#include "chunkode/models.hpp"

namespace chunkode {

// One benchmark trial: which problem at which sizes, solved how. String
// fields mirror the CLI flags one-to-one; parsing to enums happens at run
// time so a study grid can carry them verbatim.
struct TrialConfig {
  std::string problem = "mds";  // mds | neuron | chaboche | node
  int n_unit = 1;
  int n_batch = 1;
  int n_time = 16;
  int n_chunk = 1;
  std::string jacobian = "analytic";    // analytic | forward_ad | finite_difference
  std::string gradient = "adjoint";     // adjoint | fd_oracle | none
  std::string solver = "thomas";        // thomas | pcr | hybrid
  int n_switch = 1;                     // hybrid reduction depth
  std::string integration = "backward"; // backward | forward
  int repeats = 3;
  unsigned long long seed = 7;
  double t_max = 0.0;  // <= 0 means "use the model's default horizon"
};

// Measured row: the config plus derived size, wall times, result values and
// work counters. Counters cover the forward pass only, so the backward-Euler
// law linear_solves == newton_iterations holds regardless of the gradient
// mode; repeat_label is "1".."N" for individual repeats and "mean" for the
// averaged row.
struct TrialRecord {
  TrialConfig config;
  int n_size = 0;
  std::string repeat_label;
  double forward_s = 0.0;
  double backward_s = 0.0;
  double total_s = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  WorkCounters work;
  std::string status = "ok";
};

// The exact CSV column set, in order.
extern const char kCsvHeader[];

// Throws Error when a field value is out of range or misspelled.
void validate_trial_config(const TrialConfig& cfg);

// Executes the trial: one unmeasured warm-up, then `repeats` measured runs
// (forward integration timed separately from the gradient phase; the loss is
// always evaluated, the Frobenius loss over the trajectory). Returns the
// per-repeat rows followed by the "mean" row. Failures are captured in the
// rows' status field, never thrown.
std::vector<TrialRecord> run_trial(const TrialConfig& cfg);

void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const TrialRecord& rec);

// Parsed study grid: key -> list of candidate values, in canonical key
// order. The Cartesian product of all lists defines the trial set.
struct StudyGrid {
  std::vector<std::pair<std::string, std::vector<std::string>>> entries;
};

// Grid file format: one `key = v1, v2, ...` per line, `#` starts a comment,
// blank lines ignored. Keys are the TrialConfig field names. Throws Error on
// anything malformed (unknown or duplicate key, missing '=', empty value
// list, unparseable numbers).
StudyGrid parse_grid_file(std::istream& in);
StudyGrid parse_grid_file(const std::string& path);

// Runs every combination in the grid, streaming CSV rows as trials finish.
// A grid without a `problem` key runs nothing (header-only output). Failed
// trials are recorded via their status column and do not stop the sweep.
// With parallel = true, trials execute concurrently (timings become
// unreliable; values stay deterministic). Returns the number of trials whose
// status was not "ok".
int run_study(const StudyGrid& grid, std::ostream& csv, bool parallel = false);

// Integrates once and writes the whole trajectory in long format:
// `time,batch,component,value`, one row per (step, batch lane, state
// component), step 0 included.
void dump_trajectory(const TrialConfig& cfg, std::ostream& os);

}  // namespace chunkode
