#include "chunkode/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iterator>
#include <limits>
#include <ostream>
#include <sstream>

namespace chunkode {

const char kCsvHeader[] =
    "problem,n_unit,n_size,n_batch,n_time,n_chunk,jacobian,gradient,solver,integration,repeat,"
    "forward_s,backward_s,total_s,loss,grad_norm,newton_iterations,rate_evals,jacobian_evals,"
    "linear_solves,status";

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Keep arbitrary error text from breaking the CSV row structure.
std::string sanitize_status(std::string s) {
  for (char& c : s) {
    if (c == ',') c = ';';
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  return s;
}

JacobianStrategy parse_jacobian(const std::string& s) {
  if (s == "analytic") return JacobianStrategy::analytic;
  if (s == "forward_ad") return JacobianStrategy::forward_ad;
  if (s == "finite_difference") return JacobianStrategy::finite_difference;
  throw Error("unknown jacobian strategy '" + s + "'");
}

SolverChoice parse_solver(const std::string& s, int n_switch) {
  SolverChoice c;
  c.n_switch = n_switch;
  if (s == "thomas")
    c.kind = SolverKind::thomas;
  else if (s == "pcr")
    c.kind = SolverKind::pcr;
  else if (s == "hybrid")
    c.kind = SolverKind::hybrid;
  else
    throw Error("unknown solver '" + s + "'");
  return c;
}

Scheme parse_integration(const std::string& s) {
  if (s == "backward") return Scheme::backward_euler;
  if (s == "forward") return Scheme::forward_euler;
  throw Error("unknown integration scheme '" + s + "'");
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct RepeatOutcome {
  double forward_s = 0.0;
  double backward_s = 0.0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = 0.0;
  WorkCounters work;
};

RepeatOutcome run_once(const OdeModel& model, const TrialConfig& cfg, const TimeGrid& grid) {
  const int nb = cfg.n_batch, ns = model.state_size();
  const JacobianStrategy strategy = parse_jacobian(cfg.jacobian);
  const SolverChoice solver = parse_solver(cfg.solver, cfg.n_switch);
  const Scheme scheme = parse_integration(cfg.integration);
  const Array2d y0(nb, ns);  // every bundled problem starts from rest

  RepeatOutcome out;
  double t0 = now_seconds();
  Trajectory traj = scheme == Scheme::backward_euler
                        ? integrate_backward_euler(model, y0, grid, cfg.n_chunk, NewtonSettings{},
                                                   solver, strategy)
                        : integrate_forward_euler(model, y0, grid, cfg.n_chunk);
  out.forward_s = now_seconds() - t0;
  out.work = traj.work;

  const LossSpec loss = loss_frobenius();
  if (cfg.gradient == "adjoint") {
    t0 = now_seconds();
    auto [L, g] = adjoint_backward(model, traj, cfg.n_chunk, loss, scheme, solver, strategy);
    out.backward_s = now_seconds() - t0;
    out.loss = L;
    double s = 0.0;
    for (double x : g) s += x * x;
    out.grad_norm = std::sqrt(s);
  } else if (cfg.gradient == "fd_oracle") {
    out.loss = loss.value(traj);
    t0 = now_seconds();
    auto g = gradient_fd_oracle(model, y0, grid, loss, scheme);
    out.backward_s = now_seconds() - t0;
    double s = 0.0;
    for (double x : g) s += x * x;
    out.grad_norm = std::sqrt(s);
  } else if (cfg.gradient == "none") {
    out.loss = loss.value(traj);
  } else {
    throw Error("unknown gradient mode '" + cfg.gradient + "'");
  }
  return out;
}

TrialRecord base_record(const TrialConfig& cfg, int n_size) {
  TrialRecord rec;
  rec.config = cfg;
  rec.n_size = n_size;
  rec.loss = std::numeric_limits<double>::quiet_NaN();
  rec.grad_norm = std::numeric_limits<double>::quiet_NaN();
  return rec;
}

std::vector<TrialRecord> failed_rows(const TrialConfig& cfg, int n_size,
                                     const std::string& status) {
  std::vector<TrialRecord> rows;
  const int repeats = std::max(1, cfg.repeats);
  for (int r = 1; r <= repeats; ++r) {
    TrialRecord rec = base_record(cfg, n_size);
    rec.repeat_label = std::to_string(r);
    rec.status = status;
    rows.push_back(rec);
  }
  TrialRecord mean = base_record(cfg, n_size);
  mean.repeat_label = "mean";
  mean.status = status;
  rows.push_back(mean);
  return rows;
}

}  // namespace

void validate_trial_config(const TrialConfig& cfg) {
  if (cfg.problem != "mds" && cfg.problem != "neuron" && cfg.problem != "chaboche" &&
      cfg.problem != "node")
    throw Error("unknown problem '" + cfg.problem + "'");
  if (cfg.n_unit < 1) throw Error("n_unit must be >= 1");
  if (cfg.n_batch < 1) throw Error("n_batch must be >= 1");
  if (cfg.n_time < 1) throw Error("n_time must be >= 1");
  if (cfg.n_chunk < 1 || cfg.n_chunk > cfg.n_time)
    throw Error("n_chunk must be in [1, n_time]");
  if (cfg.repeats < 1) throw Error("repeats must be >= 1");
  if (cfg.n_switch < 0) throw Error("n_switch must be >= 0");
  parse_jacobian(cfg.jacobian);
  parse_solver(cfg.solver, cfg.n_switch);
  parse_integration(cfg.integration);
  if (cfg.gradient != "adjoint" && cfg.gradient != "fd_oracle" && cfg.gradient != "none")
    throw Error("unknown gradient mode '" + cfg.gradient + "'");
}

std::vector<TrialRecord> run_trial(const TrialConfig& cfg) {
  std::unique_ptr<OdeModel> model;
  try {
    validate_trial_config(cfg);
    model = build_problem(cfg.problem, cfg.n_unit, cfg.n_batch, cfg.seed);
  } catch (const std::exception& e) {
    return failed_rows(cfg, 0, sanitize_status(e.what()));
  }
  const int n_size = model->state_size();
  const double t_max = cfg.t_max > 0.0 ? cfg.t_max : model->default_t_max();
  const TimeGrid grid = TimeGrid::uniform(cfg.n_time, cfg.n_batch, t_max);

  try {
    run_once(*model, cfg, grid);  // warm-up, unmeasured
  } catch (const std::exception& e) {
    return failed_rows(cfg, n_size, sanitize_status(e.what()));
  }

  std::vector<TrialRecord> rows;
  double fwd_sum = 0.0, bwd_sum = 0.0;
  RepeatOutcome last;
  for (int r = 1; r <= cfg.repeats; ++r) {
    // deterministic given the warm-up succeeded, but stay defensive
    try {
      last = run_once(*model, cfg, grid);
    } catch (const std::exception& e) {
      return failed_rows(cfg, n_size, sanitize_status(e.what()));
    }
    TrialRecord rec = base_record(cfg, n_size);
    rec.repeat_label = std::to_string(r);
    rec.forward_s = last.forward_s;
    rec.backward_s = last.backward_s;
    rec.total_s = last.forward_s + last.backward_s;
    rec.loss = last.loss;
    rec.grad_norm = last.grad_norm;
    rec.work = last.work;
    rec.status = "ok";
    rows.push_back(rec);
    fwd_sum += last.forward_s;
    bwd_sum += last.backward_s;
  }
  TrialRecord mean = base_record(cfg, n_size);
  mean.repeat_label = "mean";
  mean.forward_s = fwd_sum / cfg.repeats;
  mean.backward_s = bwd_sum / cfg.repeats;
  mean.total_s = mean.forward_s + mean.backward_s;
  mean.loss = last.loss;
  mean.grad_norm = last.grad_norm;
  mean.work = last.work;
  mean.status = "ok";
  rows.push_back(mean);
  return rows;
}

void write_csv_header(std::ostream& os) { os << kCsvHeader << "\n"; }

void write_csv_row(std::ostream& os, const TrialRecord& rec) {
  const TrialConfig& c = rec.config;
  os << c.problem << ',' << c.n_unit << ',' << rec.n_size << ',' << c.n_batch << ',' << c.n_time
     << ',' << c.n_chunk << ',' << c.jacobian << ',' << c.gradient << ',' << c.solver << ','
     << c.integration << ',' << rec.repeat_label << ',' << fmt17(rec.forward_s) << ','
     << fmt17(rec.backward_s) << ',' << fmt17(rec.total_s) << ',' << fmt17(rec.loss) << ','
     << fmt17(rec.grad_norm) << ',' << rec.work.newton_iterations << ',' << rec.work.rate_evals
     << ',' << rec.work.jacobian_evals << ',' << rec.work.linear_solves << ','
     << sanitize_status(rec.status) << '\n';
}

namespace {

const char* kGridKeys[] = {"problem", "n_unit",   "n_batch",     "n_time",  "n_chunk",
                           "jacobian", "gradient", "solver",      "n_switch", "integration",
                           "repeats",  "seed",     "t_max"};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

int grid_key_rank(const std::string& key) {
  for (size_t i = 0; i < std::size(kGridKeys); ++i)
    if (key == kGridKeys[i]) return int(i);
  return -1;
}

int parse_int_value(const std::string& s, const std::string& key) {
  size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (...) {
    pos = std::string::npos;
  }
  if (pos != s.size()) throw Error("grid: '" + s + "' is not an integer (key " + key + ")");
  return v;
}

unsigned long long parse_ull_value(const std::string& s, const std::string& key) {
  size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (...) {
    pos = std::string::npos;
  }
  if (pos != s.size()) throw Error("grid: '" + s + "' is not an unsigned integer (key " + key + ")");
  return v;
}

double parse_double_value(const std::string& s, const std::string& key) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (...) {
    pos = std::string::npos;
  }
  if (pos != s.size()) throw Error("grid: '" + s + "' is not a number (key " + key + ")");
  return v;
}

void apply_grid_value(TrialConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "problem")
    cfg.problem = value;
  else if (key == "n_unit")
    cfg.n_unit = parse_int_value(value, key);
  else if (key == "n_batch")
    cfg.n_batch = parse_int_value(value, key);
  else if (key == "n_time")
    cfg.n_time = parse_int_value(value, key);
  else if (key == "n_chunk")
    cfg.n_chunk = parse_int_value(value, key);
  else if (key == "jacobian")
    cfg.jacobian = value;
  else if (key == "gradient")
    cfg.gradient = value;
  else if (key == "solver")
    cfg.solver = value;
  else if (key == "n_switch")
    cfg.n_switch = parse_int_value(value, key);
  else if (key == "integration")
    cfg.integration = value;
  else if (key == "repeats")
    cfg.repeats = parse_int_value(value, key);
  else if (key == "seed")
    cfg.seed = parse_ull_value(value, key);
  else if (key == "t_max")
    cfg.t_max = parse_double_value(value, key);
  else
    throw Error("grid: unknown key '" + key + "'");
}

std::vector<TrialConfig> expand_grid(const StudyGrid& grid) {
  std::vector<TrialConfig> configs;
  bool has_problem = false;
  for (const auto& [key, values] : grid.entries)
    if (key == "problem") has_problem = true;
  if (!has_problem) return configs;

  const size_t n_keys = grid.entries.size();
  std::vector<size_t> idx(n_keys, 0);
  while (true) {
    TrialConfig cfg;
    for (size_t k = 0; k < n_keys; ++k)
      apply_grid_value(cfg, grid.entries[k].first, grid.entries[k].second[idx[k]]);
    configs.push_back(cfg);
    size_t k = n_keys;
    while (k > 0) {
      --k;
      if (++idx[k] < grid.entries[k].second.size()) break;
      idx[k] = 0;
      if (k == 0) return configs;
    }
    if (n_keys == 0) return configs;
  }
}

}  // namespace

StudyGrid parse_grid_file(std::istream& in) {
  StudyGrid grid;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("grid: line " + std::to_string(line_no) + " has no '='");
    const std::string key = trim(line.substr(0, eq));
    if (grid_key_rank(key) < 0)
      throw Error("grid: unknown key '" + key + "' on line " + std::to_string(line_no));
    for (const auto& [k, v] : grid.entries)
      if (k == key) throw Error("grid: duplicate key '" + key + "'");
    std::vector<std::string> values;
    std::string rest = line.substr(eq + 1);
    size_t start = 0;
    while (true) {
      const size_t comma = rest.find(',', start);
      const std::string piece =
          trim(comma == std::string::npos ? rest.substr(start) : rest.substr(start, comma - start));
      if (piece.empty())
        throw Error("grid: empty value for key '" + key + "' on line " + std::to_string(line_no));
      values.push_back(piece);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    grid.entries.emplace_back(key, std::move(values));
  }
  std::sort(grid.entries.begin(), grid.entries.end(), [](const auto& a, const auto& b) {
    return grid_key_rank(a.first) < grid_key_rank(b.first);
  });
  return grid;
}

StudyGrid parse_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("grid: cannot open '" + path + "'");
  return parse_grid_file(in);
}

int run_study(const StudyGrid& grid, std::ostream& csv, bool parallel) {
  // Fail on malformed values before any trial runs.
  const std::vector<TrialConfig> configs = expand_grid(grid);

  write_csv_header(csv);
  int failed = 0;
  auto emit = [&](const std::vector<TrialRecord>& rows) {
    bool any_bad = false;
    for (const TrialRecord& rec : rows) {
      write_csv_row(csv, rec);
      if (rec.status != "ok") any_bad = true;
    }
    if (any_bad) ++failed;
    csv.flush();
  };

  if (!parallel) {
    for (const TrialConfig& cfg : configs) emit(run_trial(cfg));
    return failed;
  }
  std::vector<std::future<std::vector<TrialRecord>>> futures;
  futures.reserve(configs.size());
  for (const TrialConfig& cfg : configs)
    futures.push_back(std::async(std::launch::async, [cfg] { return run_trial(cfg); }));
  for (auto& f : futures) emit(f.get());
  return failed;
}

void dump_trajectory(const TrialConfig& cfg, std::ostream& os) {
  validate_trial_config(cfg);
  auto model = build_problem(cfg.problem, cfg.n_unit, cfg.n_batch, cfg.seed);
  const int ns = model->state_size();
  const double t_max = cfg.t_max > 0.0 ? cfg.t_max : model->default_t_max();
  const TimeGrid grid = TimeGrid::uniform(cfg.n_time, cfg.n_batch, t_max);
  const Array2d y0(cfg.n_batch, ns);
  const SolverChoice solver = parse_solver(cfg.solver, cfg.n_switch);
  const JacobianStrategy strategy = parse_jacobian(cfg.jacobian);
  const Trajectory traj =
      parse_integration(cfg.integration) == Scheme::backward_euler
          ? integrate_backward_euler(*model, y0, grid, cfg.n_chunk, NewtonSettings{}, solver,
                                     strategy)
          : integrate_forward_euler(*model, y0, grid, cfg.n_chunk);

  os << "time,batch,component,value\n";
  for (int step = 0; step <= traj.n_time(); ++step) {
    for (int b = 0; b < cfg.n_batch; ++b) {
      const auto p = traj.point(step, b);
      for (int i = 0; i < ns; ++i)
        os << fmt17(grid.time(step, b)) << ',' << b << ',' << i << ',' << fmt17(p[i]) << '\n';
    }
  }
}

}  // namespace chunkode
