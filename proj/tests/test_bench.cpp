#include "chunkode/bench.hpp"

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "chunkode/errors.hpp"
#include "doctest.h"

using namespace chunkode;

namespace {

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

int column_index(const std::string& name) {
  const auto cols = split(kCsvHeader);
  for (size_t i = 0; i < cols.size(); ++i)
    if (cols[i] == name) return int(i);
  FAIL("no such column: " << name);
  return -1;
}

}  // namespace

TEST_CASE("the CSV header names every column in order") {
  CHECK(std::string(kCsvHeader) ==
        "problem,n_unit,n_size,n_batch,n_time,n_chunk,jacobian,gradient,solver,integration,"
        "repeat,forward_s,backward_s,total_s,loss,grad_norm,newton_iterations,rate_evals,"
        "jacobian_evals,linear_solves,status");
  std::ostringstream os;
  write_csv_header(os);
  CHECK(os.str() == std::string(kCsvHeader) + "\n");
}

TEST_CASE("a trial emits one row per repeat plus a mean row") {
  TrialConfig cfg;
  cfg.problem = "chaboche";
  cfg.n_unit = 2;
  cfg.n_batch = 3;
  cfg.n_time = 32;
  cfg.n_chunk = 8;
  cfg.repeats = 2;

  const auto rows = run_trial(cfg);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].repeat_label == "1");
  CHECK(rows[1].repeat_label == "2");
  CHECK(rows[2].repeat_label == "mean");
  for (const auto& r : rows) {
    CHECK(r.status == "ok");
    CHECK(r.n_size == 4);  // 2 + n_unit
    CHECK(r.total_s >= 0.0);
  }

  // values and counters are deterministic across repeats; only timings vary
  CHECK(rows[0].loss == rows[1].loss);
  CHECK(rows[0].grad_norm == rows[1].grad_norm);
  CHECK(rows[0].work.newton_iterations == rows[1].work.newton_iterations);
  CHECK(rows[0].work.linear_solves == rows[1].work.linear_solves);
  CHECK(rows[2].loss == rows[0].loss);  // mean of identical values

  // forward-pass counter laws on the implicit path
  CHECK(rows[0].work.linear_solves == rows[0].work.newton_iterations);
  CHECK(rows[0].work.jacobian_evals == rows[0].work.newton_iterations);
  CHECK(rows[0].work.rate_evals == rows[0].work.newton_iterations + (32 + 7) / 8);
}

TEST_CASE("CSV rows round-trip doubles exactly") {
  TrialConfig cfg;
  cfg.problem = "mds";
  cfg.n_unit = 1;
  cfg.n_batch = 2;
  cfg.n_time = 16;
  cfg.repeats = 1;
  const auto rows = run_trial(cfg);
  REQUIRE(!rows.empty());

  std::ostringstream os;
  write_csv_row(os, rows[0]);
  const auto fields = split(csv_lines(os.str()).at(0));
  REQUIRE(fields.size() == split(kCsvHeader).size());

  const double loss = std::strtod(fields[size_t(column_index("loss"))].c_str(), nullptr);
  const double gn = std::strtod(fields[size_t(column_index("grad_norm"))].c_str(), nullptr);
  CHECK(loss == rows[0].loss);  // bitwise round-trip through the text form
  CHECK(gn == rows[0].grad_norm);
  CHECK(fields[size_t(column_index("problem"))] == "mds");
  CHECK(fields[size_t(column_index("repeat"))] == "1");
  CHECK(fields[size_t(column_index("status"))] == "ok");
}

TEST_CASE("failed trials land in the status column without commas") {
  // the reference gradient refuses more than 500 parameters; a wide neural
  // right-hand side overflows that deterministically
  TrialConfig cfg;
  cfg.problem = "node";
  cfg.n_unit = 16;
  cfg.n_batch = 1;
  cfg.n_time = 4;
  cfg.gradient = "fd_oracle";
  cfg.repeats = 1;

  const auto rows = run_trial(cfg);
  REQUIRE(!rows.empty());
  CHECK(rows[0].status != "ok");
  CHECK(rows[0].status.find(',') == std::string::npos);
  CHECK(rows[0].status.find('\n') == std::string::npos);

  std::ostringstream os;
  write_csv_row(os, rows[0]);
  const auto fields = split(csv_lines(os.str()).at(0));
  CHECK(fields.size() == split(kCsvHeader).size());  // row still parses
}

TEST_CASE("config validation rejects out-of-range and misspelled fields") {
  auto ok = [] {
    TrialConfig c;
    c.problem = "neuron";
    return c;
  }();
  CHECK_NOTHROW(validate_trial_config(ok));

  auto bad = ok;
  bad.problem = "pendulum";
  CHECK_THROWS_AS(validate_trial_config(bad), Error);
  bad = ok;
  bad.n_unit = 0;
  CHECK_THROWS_AS(validate_trial_config(bad), Error);
  bad = ok;
  bad.n_time = -4;
  CHECK_THROWS_AS(validate_trial_config(bad), Error);
  bad = ok;
  bad.n_chunk = 0;
  CHECK_THROWS_AS(validate_trial_config(bad), Error);
  bad = ok;
  bad.jacobian = "magic";
  CHECK_THROWS_AS(validate_trial_config(bad), Error);
  bad = ok;
  bad.gradient = "backprop";
  CHECK_THROWS_AS(validate_trial_config(bad), Error);
  bad = ok;
  bad.solver = "gauss";
  CHECK_THROWS_AS(validate_trial_config(bad), Error);
  bad = ok;
  bad.integration = "rk4";
  CHECK_THROWS_AS(validate_trial_config(bad), Error);
  bad = ok;
  bad.repeats = 0;
  CHECK_THROWS_AS(validate_trial_config(bad), Error);
  bad = ok;
  bad.n_switch = -1;
  CHECK_THROWS_AS(validate_trial_config(bad), Error);
}

TEST_CASE("grid files parse keys, lists and comments") {
  std::istringstream in(
      "# sweep over solvers\n"
      "problem = chaboche\n"
      "\n"
      "n_chunk = 1, 8, 32   # chunk sizes\n"
      "solver  = thomas, pcr\n");
  const auto grid = parse_grid_file(in);
  REQUIRE(grid.entries.size() == 3);

  auto find = [&](const std::string& key) -> const std::vector<std::string>* {
    for (const auto& [k, v] : grid.entries)
      if (k == key) return &v;
    return nullptr;
  };
  REQUIRE(find("problem") != nullptr);
  CHECK(*find("problem") == std::vector<std::string>{"chaboche"});
  REQUIRE(find("n_chunk") != nullptr);
  CHECK(*find("n_chunk") == std::vector<std::string>{"1", "8", "32"});
  REQUIRE(find("solver") != nullptr);
  CHECK(*find("solver") == std::vector<std::string>{"thomas", "pcr"});
}

TEST_CASE("malformed grid lines are typed errors") {
  auto parse = [](const char* text) {
    std::istringstream in(text);
    return parse_grid_file(in);
  };
  CHECK_THROWS_AS(parse("wingspan = 3\n"), Error);            // unknown key
  CHECK_THROWS_AS(parse("problem = mds\nproblem = node\n"), Error);  // duplicate
  CHECK_THROWS_AS(parse("problem mds\n"), Error);             // missing '='
  CHECK_THROWS_AS(parse("problem =\n"), Error);               // empty list
  CHECK_THROWS_AS(parse("n_time = twelve\n"), Error);         // not a number
}

TEST_CASE("a grid without a problem key produces only the header") {
  StudyGrid grid;
  grid.entries.push_back({"n_chunk", {"1", "2"}});
  std::ostringstream os;
  const int failed = run_study(grid, os);
  CHECK(failed == 0);
  const auto lines = csv_lines(os.str());
  REQUIRE(lines.size() == 1);
  CHECK(lines[0] == kCsvHeader);
}

TEST_CASE("study sweeps are deterministic in every non-timing column") {
  std::istringstream in(
      "problem = mds, chaboche\n"
      "n_unit = 1\n"
      "n_batch = 2\n"
      "n_time = 16\n"
      "n_chunk = 1, 4\n"
      "repeats = 2\n");
  const auto grid = parse_grid_file(in);

  std::ostringstream a, b;
  CHECK(run_study(grid, a) == 0);
  CHECK(run_study(grid, b) == 0);

  const auto la = csv_lines(a.str());
  const auto lb = csv_lines(b.str());
  REQUIRE(la.size() == lb.size());
  // 2 problems x 2 chunk sizes, each 2 repeats + mean, plus the header
  CHECK(la.size() == 1 + 4 * 3);

  const auto header = split(kCsvHeader);
  std::vector<bool> timing(header.size(), false);
  for (size_t i = 0; i < header.size(); ++i) {
    timing[i] = header[i] == "forward_s" || header[i] == "backward_s" || header[i] == "total_s";
  }
  CHECK(la[0] == kCsvHeader);
  for (size_t r = 1; r < la.size(); ++r) {
    const auto fa = split(la[r]);
    const auto fb = split(lb[r]);
    REQUIRE(fa.size() == header.size());
    REQUIRE(fb.size() == header.size());
    for (size_t c = 0; c < header.size(); ++c) {
      if (timing[c]) continue;
      CAPTURE(r);
      CAPTURE(header[c]);
      CHECK(fa[c] == fb[c]);
    }
  }
}

TEST_CASE("trajectory dumps list every grid point in long format") {
  TrialConfig cfg;
  cfg.problem = "mds";
  cfg.n_unit = 1;
  cfg.n_batch = 2;
  cfg.n_time = 4;
  std::ostringstream os;
  dump_trajectory(cfg, os);
  const auto lines = csv_lines(os.str());
  REQUIRE(lines.size() == 1 + size_t(4 + 1) * 2 * 2);  // header + steps x batches x components
  CHECK(lines[0] == "time,batch,component,value");

  // step 0 rows carry the initial condition at time 0
  const auto first = split(lines[1]);
  REQUIRE(first.size() == 4);
  CHECK(std::strtod(first[0].c_str(), nullptr) == 0.0);
  CHECK(first[1] == "0");
  CHECK(first[2] == "0");
}
