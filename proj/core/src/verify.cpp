#include "chunkode/verify.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "chunkode/adjoint.hpp"
#include "chunkode/models.hpp"

namespace chunkode {

namespace {

struct Checker {
  VerifyReport& rep;
  void operator()(bool ok, const std::string& msg) {
    ++rep.checks;
    if (!ok) rep.failures.push_back(msg);
  }
};

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// max |a - ref| scaled by max(1, |ref|_inf)
double rel_inf(std::span<const double> a, std::span<const double> ref) {
  return max_abs_diff(a, ref) / std::max(1.0, max_abs(ref));
}

// Sum of exponents in the descending power-of-two decomposition of n; a
// partition of size 2^e costs e reduction sweeps.
long expected_sweeps(int n) {
  long total = 0;
  for (int e = 0; (1 << e) <= n; ++e)
    if (n & (1 << e)) total += e;
  return total;
}

void suite_solvers(VerifyReport& rep) {
  Checker check{rep};
  const int chunk_sizes[] = {1, 2, 3, 4, 5, 7, 8, 13, 16, 25, 33};
  unsigned long long seed = 100;
  for (int c : chunk_sizes) {
    for (int ns : {1, 3, 5}) {
      for (int nb : {1, 3}) {
        const auto sys = make_random_system(c, nb, ns, seed);
        const auto rhs = make_random_rhs(c, nb, ns, seed + 1);
        seed += 2;
        const auto x_ref = solve_dense_oracle(sys, rhs);
        const std::span<const double> ref{x_ref.data(), x_ref.size()};
        std::ostringstream tag;
        tag << "solvers: n_chunk=" << c << " n_size=" << ns << " n_batch=" << nb;

        const auto x_thomas = solve_thomas(sys, rhs);
        check(rel_inf({x_thomas.data(), x_thomas.size()}, ref) <= 1e-9,
              tag.str() + ": forward substitution disagrees with the dense reference");

        long sweeps = 0;
        const auto x_pcr = solve_pcr(sys, rhs, &sweeps);
        check(rel_inf({x_pcr.data(), x_pcr.size()}, ref) <= 1e-9,
              tag.str() + ": cyclic reduction disagrees with the dense reference");
        check(sweeps == expected_sweeps(c),
              tag.str() + ": reduction sweep count " + std::to_string(sweeps) + " != expected " +
                  std::to_string(expected_sweeps(c)));

        for (int n_switch : {0, 1, 3}) {
          const auto x_h = solve_hybrid(sys, rhs, n_switch);
          check(rel_inf({x_h.data(), x_h.size()}, ref) <= 1e-9,
                tag.str() + ": hybrid(n_switch=" + std::to_string(n_switch) +
                    ") disagrees with the dense reference");
        }
      }
    }
  }
}

// Per-model generator of states where every rate branch is differentiable
// with margin (finite differences must not straddle a kink).
using StateSampler = std::function<void(std::mt19937_64&, std::span<double>)>;

void sample_uniform(std::mt19937_64& rng, std::span<double> y, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : y) x = u(rng);
}

struct JacobianCase {
  std::string key;
  std::unique_ptr<OdeModel> model;
  StateSampler sample;
};

std::vector<JacobianCase> jacobian_cases() {
  std::vector<JacobianCase> cases;
  cases.push_back({"mds", build_mass_damper_spring(2, 2),
                   [](std::mt19937_64& rng, std::span<double> y) { sample_uniform(rng, y, -1, 1); }});
  cases.push_back({"neuron", build_neuron(2, 2),
                   [](std::mt19937_64& rng, std::span<double> y) { sample_uniform(rng, y, -1, 1); }});
  // Alternate between the flowing and the purely elastic branch, keeping the
  // overstress away from zero so difference quotients stay on one side.
  cases.push_back({"chaboche", build_chaboche(2, 2),
                   [](std::mt19937_64& rng, std::span<double> y) {
                     std::uniform_real_distribution<double> coin(0.0, 1.0);
                     const bool plastic = coin(rng) < 0.5;
                     std::uniform_real_distribution<double> x(-0.1, 0.1);
                     if (plastic) {
                       y[0] = 2.0 + 2.0 * coin(rng);   // stress well past yield
                       y[1] = 0.1 + 0.4 * coin(rng);   // small isotropic hardening
                     } else {
                       y[0] = -0.3 + 0.6 * coin(rng);  // inside the elastic domain
                       y[1] = 1.0 + coin(rng);
                     }
                     for (size_t i = 2; i < y.size(); ++i) y[i] = x(rng);
                   }});
  cases.push_back({"node", build_neural_ode(2, 2),
                   [](std::mt19937_64& rng, std::span<double> y) { sample_uniform(rng, y, -1, 1); }});
  cases.push_back({"scalar decay", build_scalar_decay(1.7),
                   [](std::mt19937_64& rng, std::span<double> y) { sample_uniform(rng, y, -2, 2); }});
  cases.push_back({"constant rate", build_constant_rate(0.4),
                   [](std::mt19937_64& rng, std::span<double> y) { sample_uniform(rng, y, -2, 2); }});
  return cases;
}

void suite_jacobians(VerifyReport& rep) {
  Checker check{rep};
  std::mt19937_64 rng(2024);
  for (auto& jc : jacobian_cases()) {
    const OdeModel& m = *jc.model;
    const int ns = m.state_size();
    const int nb = m.n_batch() > 0 ? m.n_batch() : 2;
    std::uniform_real_distribution<double> ut(0.0, m.default_t_max());
    for (int trial = 0; trial < 20; ++trial) {
      Array2d t(1, nb);
      BatchedChunkVector y(1, nb, ns);
      for (int b = 0; b < nb; ++b) {
        t(0, b) = ut(rng);
        jc.sample(rng, y.point(0, b));
      }
      BatchedBlockArray j_ad(1, nb, ns), j_an(1, nb, ns), j_fd(1, nb, ns);
      jacobian_state(m, t, y, JacobianStrategy::forward_ad, j_ad);
      jacobian_state(m, t, y, JacobianStrategy::finite_difference, j_fd);
      const std::string tag = "jacobians: " + jc.key + " trial " + std::to_string(trial);
      if (m.has_analytic_jacobian()) {
        jacobian_state(m, t, y, JacobianStrategy::analytic, j_an);
        const double scale = std::max(1.0, max_abs({j_an.data(), j_an.size()}));
        check(max_abs_diff({j_ad.data(), j_ad.size()}, {j_an.data(), j_an.size()}) <=
                  1e-12 * scale,
              tag + ": forward-mode and analytic Jacobians disagree");
      }
      const double scale = std::max(1.0, max_abs({j_ad.data(), j_ad.size()}));
      check(max_abs_diff({j_ad.data(), j_ad.size()}, {j_fd.data(), j_fd.size()}) <= 1e-5 * scale,
            tag + ": forward-mode and finite-difference Jacobians disagree");
    }
  }
}

void suite_gradients(VerifyReport& rep) {
  Checker check{rep};
  const LossSpec loss = loss_frobenius();
  const NewtonSettings tight{1e-12, 1e-10, 100};

  struct Case {
    std::string key;
    std::unique_ptr<OdeModel> model;
    double implicit_t_max;  // 0 = model default
    double explicit_t_max;  // horizon inside the explicit scheme's stability region
  };
  std::vector<Case> cases;
  // Horizons keep the difference-quotient reference inside its trust region.
  // The mass-damper chain needs a short window on both schemes: its masses
  // sit near 1e-5 where the quotient's fixed 1e-6 probe costs ~1% truncation
  // error whenever the mass gradients are appreciable, its as-printed rate
  // has an anti-restoring coupling mode (growth rate ~460 at two units) that
  // makes implicit steps near Delta_t ~ 1/460 ill-conditioned, and coarser
  // grids alias the 0.01-period forcing lane. At t_max = 2e-4 the solves are
  // well conditioned, growth is negligible, and every component of the
  // reference is trustworthy at the comparison tolerance.
  cases.push_back({"mds", build_mass_damper_spring(2, 2), 2e-4, 2e-4});
  cases.push_back({"neuron", build_neuron(2, 2), 0.0, 0.5});
  cases.push_back({"chaboche", build_chaboche(2, 2), 0.0, 0.3});
  cases.push_back({"node", build_neural_ode(2, 2), 0.0, 1.0});

  for (auto& c : cases) {
    const OdeModel& m = *c.model;
    const Array2d y0(2, m.state_size());
    for (Scheme scheme : {Scheme::backward_euler, Scheme::forward_euler}) {
      const bool implicit = scheme == Scheme::backward_euler;
      const char* sname = implicit ? "backward" : "forward";
      // The implicit scheme handles stiff horizons; the explicit comparison
      // must stay where the explicit scheme is stable at all.
      const double t_max = implicit
                               ? (c.implicit_t_max > 0 ? c.implicit_t_max : m.default_t_max())
                               : c.explicit_t_max;
      const TimeGrid grid = TimeGrid::uniform(32, 2, t_max);
      bool agreed = true;
      try {
        const auto res = gradient_adjoint(m, y0, grid, 4, loss, scheme, SolverChoice{},
                                          preferred_jacobian_strategy(m), tight);
        const auto g_fd = gradient_fd_oracle(m, y0, grid, loss, scheme);
        for (size_t j = 0; j < g_fd.size(); ++j) {
          if (std::fabs(res.gradient[j] - g_fd[j]) > 1e-4 * (1.0 + std::fabs(g_fd[j]))) {
            std::ostringstream msg;
            msg << "gradients: " << c.key << " (" << sname << ") component " << j << ": adjoint "
                << res.gradient[j] << " vs reference " << g_fd[j];
            check(false, msg.str());
            agreed = false;
          }
        }
      } catch (const std::exception& e) {
        check(false, std::string("gradients: ") + c.key + " (" + sname + ") threw: " + e.what());
        agreed = false;
      }
      if (agreed) check(true, "");  // one aggregate tick per (model, scheme) pair
    }
  }

  // Linearity: doubling the loss jumps doubles the gradient exactly (the
  // whole reverse pass is linear in dL/dy and scaling by 2 is lossless).
  {
    auto model = build_mass_damper_spring(2, 2);
    const Array2d y0(2, model->state_size());
    const TimeGrid grid = TimeGrid::uniform(10, 2, model->default_t_max());
    const Trajectory traj = integrate_backward_euler(*model, y0, grid, 5);
    LossSpec doubled = loss_frobenius();
    doubled.state_gradient = [](const Trajectory& tr, Array2d& g) {
      loss_frobenius().state_gradient(tr, g);
      for (size_t i = 0; i < g.size(); ++i) g.data()[i] *= 2.0;
    };
    const auto g1 = adjoint_backward(*model, traj, 5, loss_frobenius(), Scheme::backward_euler);
    const auto g2 = adjoint_backward(*model, traj, 5, doubled, Scheme::backward_euler);
    bool exact = true;
    for (size_t j = 0; j < g1.second.size(); ++j)
      if (g2.second[j] != 2.0 * g1.second[j]) exact = false;
    check(exact, "gradients: doubling the loss jumps did not exactly double the gradient");
  }

  // Chunked reverse pass == step-by-step reverse pass.
  {
    auto model = build_mass_damper_spring(2, 2);
    const int nb = 2, ns = model->state_size();
    const Array2d y0(nb, ns);
    const TimeGrid grid = TimeGrid::uniform(8, nb, model->default_t_max());
    const Trajectory traj = integrate_backward_euler(*model, y0, grid, 1, tight);
    Array2d dL(traj.states.rows(), traj.states.cols());
    loss_frobenius().state_gradient(traj, dL);

    AdjointState seq;
    seq.lambda = Array2d(nb, ns);
    seq.grad.assign(model->params().size(), 0.0);
    std::vector<double> t_i(nb), t_prev(nb);
    Array2d y_i(nb, ns), y_prev(nb, ns), jump(nb, ns);
    for (int step = traj.n_time(); step >= 1; --step) {
      for (int b = 0; b < nb; ++b) {
        t_i[b] = grid.time(step, b);
        t_prev[b] = grid.time(step - 1, b);
        for (int i = 0; i < ns; ++i) {
          y_i(b, i) = traj.point(step, b)[i];
          y_prev(b, i) = traj.point(step - 1, b)[i];
          jump(b, i) = dL.row(step)[size_t(b) * ns + i];
        }
      }
      adjoint_step_sequential(*model, y_i, y_prev, t_i, t_prev, jump, seq);
    }

    for (int n_chunk : {1, 3, 8}) {
      const auto res =
          adjoint_backward(*model, traj, n_chunk, loss_frobenius(), Scheme::backward_euler);
      // A one-step chunk retraces the sequential arithmetic; wider chunks
      // solve for increments relative to the carried lambda, a different
      // rounding path on this badly scaled system.
      const double tol = n_chunk == 1 ? 1e-12 : 1e-8;
      check(rel_inf(res.second, seq.grad) <= tol,
            "gradients: chunked reverse pass (n_chunk=" + std::to_string(n_chunk) +
                ") deviates from the sequential steps");
    }
  }

  // The loss's own gradient callback must match difference quotients of its
  // value callback.
  {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Trajectory traj;
    traj.n_batch = 2;
    traj.n_size = 3;
    traj.grid = TimeGrid::uniform(6, 2, 1.0);
    traj.states = Array2d(7, 6);
    for (size_t i = 0; i < traj.states.size(); ++i) traj.states.data()[i] = u(rng);

    Array2d g(7, 6);
    loss_frobenius().state_gradient(traj, g);
    check(max_abs(g.row(0)) == 0.0, "gradients: loss gradient at the initial state must be zero");

    std::uniform_int_distribution<int> pick_row(1, 6), pick_col(0, 5);
    bool ok = true;
    for (int probe = 0; probe < 20; ++probe) {
      const int r = pick_row(rng), c = pick_col(rng);
      Trajectory pert = traj;
      const double v = traj.states(r, c);
      const double delta = 1e-6 * (1.0 + std::fabs(v));
      pert.states(r, c) = v + delta;
      const double lp = loss_frobenius().value(pert);
      pert.states(r, c) = v - delta;
      const double lm = loss_frobenius().value(pert);
      const double fd = (lp - lm) / (2.0 * delta);
      if (std::fabs(g(r, c) - fd) > 1e-5 * (1.0 + std::fabs(fd))) ok = false;
    }
    check(ok, "gradients: loss gradient disagrees with difference quotients of its value");
  }
}

void suite_convergence(VerifyReport& rep) {
  Checker check{rep};

  {
    // One implicit step of the linear decay problem has a closed form.
    auto model = build_scalar_decay(2.5);
    Array2d y0(1, 1);
    y0(0, 0) = 1.3;
    const TimeGrid grid = TimeGrid::uniform(1, 1, 0.1);
    const Trajectory traj = integrate_backward_euler(*model, y0, grid, 1);
    const double ref = 1.3 / (1.0 + 2.5 * 0.1);
    check(std::fabs(traj.point(1, 0)[0] - ref) <= 1e-14 * std::fabs(ref),
          "convergence: single implicit step misses the closed form");
  }

  for (bool implicit : {true, false}) {
    auto model = build_scalar_decay(1.0);
    Array2d y0(1, 1);
    y0(0, 0) = 1.0;
    const double ref = std::exp(-1.0);
    double prev_err = 0.0;
    int idx = 0;
    for (int n : {16, 32, 64, 128}) {
      const TimeGrid grid = TimeGrid::uniform(n, 1, 1.0);
      const Trajectory traj = implicit ? integrate_backward_euler(*model, y0, grid, 4)
                                       : integrate_forward_euler(*model, y0, grid);
      const double err = std::fabs(traj.point(n, 0)[0] - ref);
      if (idx > 0) {
        const double ratio = prev_err / err;
        check(ratio >= 1.8 && ratio <= 2.2,
              std::string("convergence: ") + (implicit ? "implicit" : "explicit") +
                  " error ratio " + std::to_string(ratio) + " outside [1.8, 2.2] at n=" +
                  std::to_string(n));
      }
      prev_err = err;
      ++idx;
    }
  }

  {
    // Stiff decay with unit steps: implicit stays bounded, explicit overflows.
    auto model = build_scalar_decay(1e6);
    Array2d y0(1, 1);
    y0(0, 0) = 1.0;
    const TimeGrid grid = TimeGrid::uniform(60, 1, 60.0);
    const Trajectory traj = integrate_backward_euler(*model, y0, grid, 10);
    bool bounded = true;
    for (int s = 1; s <= 60; ++s) {
      const double v = traj.point(s, 0)[0];
      if (!std::isfinite(v) || std::fabs(v) > 1.0) bounded = false;
    }
    check(bounded, "convergence: implicit integration lost stability on the stiff problem");

    bool blew_up = false;
    try {
      integrate_forward_euler(*model, y0, grid);
    } catch (const NonFiniteOutput&) {
      blew_up = true;
    }
    check(blew_up, "convergence: explicit integration unexpectedly survived the stiff problem");
  }

  {
    // Zero right-hand side: the initial guess already solves every chunk.
    auto model = build_constant_rate(0.0);
    Array2d y0(1, 1);
    y0(0, 0) = 0.7;
    const TimeGrid grid = TimeGrid::uniform(8, 1, 1.0);
    const Trajectory traj = integrate_backward_euler(*model, y0, grid, 4);
    check(traj.work.newton_iterations == 0,
          "convergence: zero rate should converge before the first iteration");
    check(traj.point(8, 0)[0] == 0.7, "convergence: zero rate must leave the state unchanged");
  }

  {
    // Linear problem: one iteration per chunk, and the bookkeeping laws.
    auto model = build_scalar_decay(1.0);
    Array2d y0(1, 1);
    y0(0, 0) = 1.0;
    const TimeGrid grid = TimeGrid::uniform(4, 1, 1.0);
    const Trajectory traj = integrate_backward_euler(*model, y0, grid, 2);
    check(traj.work.newton_iterations == 2,
          "convergence: linear problem should take exactly one iteration per chunk");
    check(traj.work.linear_solves == traj.work.newton_iterations,
          "convergence: linear solve count must equal iteration count");
    check(traj.work.rate_evals == traj.work.newton_iterations + 2,
          "convergence: rate evaluations must be iterations plus one per chunk");
  }
}

}  // namespace

BlockBidiagonalSystem make_random_system(int n_chunk, int n_batch, int n_size,
                                         unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BlockBidiagonalSystem sys(n_chunk, n_batch, n_size);
  for (size_t i = 0; i < sys.diag.size(); ++i) sys.diag.data()[i] = u(rng);
  for (int k = 0; k < n_chunk; ++k)
    for (int b = 0; b < n_batch; ++b)
      for (int i = 0; i < n_size; ++i) sys.diag(k, b, i, i) += n_size + 1.0;
  for (size_t i = 0; i < sys.offdiag.size(); ++i) sys.offdiag.data()[i] = 0.5 * u(rng);
  return sys;
}

BatchedChunkVector make_random_rhs(int n_chunk, int n_batch, int n_size,
                                   unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BatchedChunkVector rhs(n_chunk, n_batch, n_size);
  for (size_t i = 0; i < rhs.size(); ++i) rhs.data()[i] = u(rng);
  return rhs;
}

const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names = {"solvers", "jacobians", "gradients",
                                                 "convergence", "all"};
  return names;
}

VerifyReport run_verify_suite(const std::string& suite) {
  VerifyReport rep;
  rep.suite = suite;
  if (suite == "solvers")
    suite_solvers(rep);
  else if (suite == "jacobians")
    suite_jacobians(rep);
  else if (suite == "gradients")
    suite_gradients(rep);
  else if (suite == "convergence")
    suite_convergence(rep);
  else if (suite == "all") {
    for (const std::string& name : {"solvers", "jacobians", "gradients", "convergence"}) {
      VerifyReport sub = run_verify_suite(name);
      rep.checks += sub.checks;
      rep.failures.insert(rep.failures.end(), sub.failures.begin(), sub.failures.end());
    }
  } else {
    throw Error("unknown verification suite '" + suite + "'");
  }
  return rep;
}

}  // namespace chunkode
