#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "chunkode/bench.hpp"
#include "chunkode/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // a trial or verification check failed
constexpr int kExitUsage = 2;    // bad flags, grid file, or suite name

void add_trial_flags(CLI::App& cmd, chunkode::TrialConfig& cfg, bool with_gradient_flags) {
  cmd.add_option("--problem", cfg.problem, "Problem key: mds, neuron, chaboche, node");
  cmd.add_option("--n-unit", cfg.n_unit, "Units/elements per system");
  cmd.add_option("--n-batch", cfg.n_batch, "Independent batch lanes");
  cmd.add_option("--n-time", cfg.n_time, "Number of time steps");
  cmd.add_option("--n-chunk", cfg.n_chunk, "Steps solved together per implicit chunk");
  cmd.add_option("--jacobian", cfg.jacobian,
                 "Derivative strategy: analytic, forward_ad, finite_difference");
  if (with_gradient_flags)
    cmd.add_option("--gradient", cfg.gradient, "Gradient mode: adjoint, fd_oracle, none");
  cmd.add_option("--solver", cfg.solver, "Chunk solver: thomas, pcr, hybrid");
  cmd.add_option("--n-switch", cfg.n_switch, "Hybrid: reduction sweeps before substitution");
  cmd.add_option("--integration", cfg.integration, "Scheme: backward or forward");
  if (with_gradient_flags) cmd.add_option("--repeats", cfg.repeats, "Measured repeats per trial");
  cmd.add_option("--seed", cfg.seed, "Parameter-initialization seed (node)");
  cmd.add_option("--t-max", cfg.t_max, "Time horizon (default: the model's own)")
      ->check(CLI::PositiveNumber);
}

int with_output_stream(const std::string& path, const std::function<int(std::ostream&)>& body) {
  if (path.empty()) return body(std::cout);
  std::ofstream out(path);
  if (!out) {
    std::cerr << "cannot open output file '" << path << "'\n";
    return kExitUsage;
  }
  return body(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chunked implicit ODE integration benchmark harness"};
  app.require_subcommand(1);

  chunkode::TrialConfig run_cfg;
  std::string run_out;
  CLI::App* run = app.add_subcommand("run", "Execute one timed trial and emit CSV rows");
  add_trial_flags(*run, run_cfg, true);
  run->add_option("--out", run_out, "CSV output file (default: stdout)");

  std::string study_grid, study_out;
  bool study_parallel = false;
  CLI::App* study = app.add_subcommand("study", "Run the Cartesian product of a grid file");
  study->add_option("--grid", study_grid, "Grid file: `key = v1, v2, ...` lines")->required();
  study->add_option("--out", study_out, "CSV output file (default: stdout)");
  study->add_flag("--parallel", study_parallel,
                  "Run trials concurrently (timings become unreliable)");

  chunkode::TrialConfig traj_cfg;
  std::string traj_out;
  CLI::App* traj = app.add_subcommand("traj", "Integrate once and dump the full trajectory");
  add_trial_flags(*traj, traj_cfg, false);
  traj->add_option("--out", traj_out, "CSV output file (default: stdout)");

  std::string suite;
  CLI::App* verify = app.add_subcommand("verify", "Run an invariant suite");
  verify->add_option("suite", suite, "One of: solvers, jacobians, gradients, convergence, all")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (run->parsed()) {
    try {
      chunkode::validate_trial_config(run_cfg);
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return kExitUsage;
    }
    const auto rows = chunkode::run_trial(run_cfg);
    bool failed = false;
    const int code = with_output_stream(run_out, [&](std::ostream& os) {
      chunkode::write_csv_header(os);
      for (const auto& rec : rows) {
        chunkode::write_csv_row(os, rec);
        if (rec.status != "ok") failed = true;
      }
      return kExitOk;
    });
    if (code != kExitOk) return code;
    if (failed) {
      std::cerr << "trial failed: " << rows.front().status << "\n";
      return kExitFailure;
    }
    return kExitOk;
  }

  if (study->parsed()) {
    chunkode::StudyGrid grid;
    try {
      grid = chunkode::parse_grid_file(study_grid);
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return kExitUsage;
    }
    if (study_parallel)
      std::cerr << "note: --parallel makes wall times unreliable; result values stay"
                   " deterministic\n";
    try {
      return with_output_stream(study_out, [&](std::ostream& os) {
        const int n_failed = chunkode::run_study(grid, os, study_parallel);
        if (n_failed > 0)
          std::cerr << n_failed << " trial(s) recorded a failure status; see the CSV\n";
        return kExitOk;  // failures are data, not a broken sweep
      });
    } catch (const std::exception& e) {
      // only reachable for malformed values discovered during expansion
      std::cerr << e.what() << "\n";
      return kExitUsage;
    }
  }

  if (traj->parsed()) {
    try {
      chunkode::validate_trial_config(traj_cfg);
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return kExitUsage;
    }
    try {
      return with_output_stream(traj_out, [&](std::ostream& os) {
        chunkode::dump_trajectory(traj_cfg, os);
        return kExitOk;
      });
    } catch (const std::exception& e) {
      std::cerr << "trajectory dump failed: " << e.what() << "\n";
      return kExitFailure;
    }
  }

  if (verify->parsed()) {
    const auto& names = chunkode::verify_suite_names();
    if (std::find(names.begin(), names.end(), suite) == names.end()) {
      std::cerr << "unknown suite '" << suite << "'; expected one of:";
      for (const auto& n : names) std::cerr << ' ' << n;
      std::cerr << "\n";
      return kExitUsage;
    }
    const chunkode::VerifyReport rep = chunkode::run_verify_suite(suite);
    std::cout << rep.suite << ": " << rep.checks << " checks, " << rep.failures.size()
              << " failure(s)\n";
    const size_t shown = std::min<size_t>(rep.failures.size(), 10);
    for (size_t i = 0; i < shown; ++i) std::cout << "  " << rep.failures[i] << "\n";
    if (rep.failures.size() > shown)
      std::cout << "  ... " << (rep.failures.size() - shown) << " more\n";
    return rep.ok() ? kExitOk : kExitFailure;
  }

  return kExitUsage;
}
