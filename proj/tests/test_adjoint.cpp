#include "chunkode/adjoint.hpp"

#include <cmath>
#include <vector>

#include "chunkode/errors.hpp"
#include "chunkode/models.hpp"
#include "chunkode/time_grid.hpp"
#include "doctest.h"

using namespace chunkode;

namespace {

// Loss = final state of batch 0, component 0. Linear, so its gradient is a
// single unit entry and closed-form parameter sensitivities are exact.
LossSpec loss_final_component() {
  LossSpec spec;
  spec.value = [](const Trajectory& traj) { return traj.states(traj.n_time(), 0); };
  spec.state_gradient = [](const Trajectory& traj, Array2d& g) {
    g.fill(0.0);
    g(traj.n_time(), 0) = 1.0;
  };
  return spec;
}

double rel_gap(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::fabs(a[i] - b[i]) / (1.0 + std::fabs(b[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("trajectory norm loss and its gradient follow the definition") {
  Trajectory traj;
  traj.states = Array2d(3, 2);  // 2 steps, one batch of width 2
  traj.n_batch = 1;
  traj.n_size = 2;
  traj.states(0, 0) = 9.0;  // initial row, must be excluded
  traj.states(0, 1) = -9.0;
  traj.states(1, 0) = 3.0;
  traj.states(1, 1) = 0.0;
  traj.states(2, 0) = 0.0;
  traj.states(2, 1) = 4.0;

  const auto loss = loss_frobenius();
  CHECK(loss.value(traj) == doctest::Approx(5.0).epsilon(1e-15));  // sqrt(9 + 16)

  Array2d g(3, 2);
  g.fill(7.0);
  loss.state_gradient(traj, g);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(1, 0) == doctest::Approx(3.0 / 5.0).epsilon(1e-15));
  CHECK(g(1, 1) == 0.0);
  CHECK(g(2, 0) == 0.0);
  CHECK(g(2, 1) == doctest::Approx(4.0 / 5.0).epsilon(1e-15));
}

TEST_CASE("trajectory norm gradient guards the all-zero trajectory") {
  Trajectory traj;
  traj.states = Array2d(3, 2);
  traj.states.fill(0.0);
  traj.n_batch = 1;
  traj.n_size = 2;
  const auto loss = loss_frobenius();
  CHECK(loss.value(traj) == 0.0);
  Array2d g(3, 2);
  g.fill(1.0);
  loss.state_gradient(traj, g);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) CHECK(g(i, j) == 0.0);
}

TEST_CASE("constant-rate sensitivity equals the horizon under both schemes") {
  // y(T) = y0 + p T: dL/dp = T exactly, independent of stepping
  auto m = build_constant_rate(0.3);
  Array2d y0(1, 1);
  y0(0, 0) = 1.5;
  const double t_max = 2.5;
  const auto grid = TimeGrid::uniform(20, 1, t_max);
  const auto loss = loss_final_component();

  for (Scheme scheme : {Scheme::backward_euler, Scheme::forward_euler}) {
    for (int nc : {1, 4, 20}) {
      const auto res = gradient_adjoint(*m, y0, grid, nc, loss, scheme);
      CAPTURE(int(scheme));
      CAPTURE(nc);
      REQUIRE(res.gradient.size() == 1);
      CHECK(res.gradient[0] == doctest::Approx(t_max).epsilon(1e-12));
      CHECK(res.loss == doctest::Approx(1.5 + 0.3 * t_max).epsilon(1e-12));
    }
  }
}

TEST_CASE("scalar decay gradients match the closed forms of each scheme") {
  const double p = 0.8, y0v = 2.0, dt = 0.05;
  const int n = 20;
  auto m = build_scalar_decay(p);
  Array2d y0(1, 1);
  y0(0, 0) = y0v;
  const auto grid = TimeGrid::uniform(n, 1, n * dt);
  const auto loss = loss_final_component();

  SUBCASE("implicit: d/dp of y0 (1 + p dt)^{-n}") {
    const double expect = -n * dt * y0v * std::pow(1.0 + p * dt, -n - 1);
    for (int nc : {1, 5, 20}) {
      const auto res = gradient_adjoint(*m, y0, grid, nc, loss, Scheme::backward_euler,
                                        SolverChoice{}, JacobianStrategy::analytic,
                                        NewtonSettings{1e-13, 1e-12, 100});
      CAPTURE(nc);
      CHECK(res.gradient[0] == doctest::Approx(expect).epsilon(1e-10));
    }
  }

  SUBCASE("explicit: d/dp of y0 (1 - p dt)^{n}") {
    const double expect = -n * dt * y0v * std::pow(1.0 - p * dt, n - 1);
    for (int nc : {1, 5, 20}) {
      const auto res = gradient_adjoint(*m, y0, grid, nc, loss, Scheme::forward_euler);
      CAPTURE(nc);
      CHECK(res.gradient[0] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("the chunked reverse pass reproduces the sequential one") {
  auto m = build_mass_damper_spring(2, 2);
  const int ns = m->state_size(), nb = 2, n = 12;
  Array2d y0(nb, ns);
  y0.fill(0.1);
  const auto grid = TimeGrid::uniform(n, nb, 1.0);
  const auto traj = integrate_backward_euler(*m, y0, grid, 4, NewtonSettings{1e-13, 1e-12, 100});

  const auto loss = loss_frobenius();
  Array2d dL(traj.states.rows(), traj.states.cols());
  loss.state_gradient(traj, dL);

  // hand-rolled sequential sweep
  AdjointState seq;
  seq.lambda = Array2d(nb, ns);
  seq.lambda.fill(0.0);
  seq.grad.assign(m->params().size(), 0.0);
  for (int i = n; i >= 1; --i) {
    Array2d y_i(nb, ns), y_prev(nb, ns), dL_i(nb, ns);
    std::vector<double> t_i(nb), t_prev(nb);
    for (int b = 0; b < nb; ++b) {
      for (int c = 0; c < ns; ++c) {
        y_i(b, c) = traj.point(i, b)[c];
        y_prev(b, c) = traj.point(i - 1, b)[c];
        dL_i(b, c) = dL(i, size_t(b) * ns + c);
      }
      t_i[b] = grid.time(i, b);
      t_prev[b] = grid.time(i - 1, b);
    }
    adjoint_step_sequential(*m, y_i, y_prev, t_i, t_prev, dL_i, seq);
  }

  // chunked sweeps of several widths against it
  for (int nc : {1, 3, 4, 12}) {
    auto [value, grad] = adjoint_backward(*m, traj, nc, loss, Scheme::backward_euler);
    CAPTURE(nc);
    CHECK(value == doctest::Approx(loss.value(traj)).epsilon(1e-15));
    CHECK(rel_gap(grad, seq.grad) <= 1e-12);
  }

  // and the single-chunk block solve entry point as well
  AdjointState blk;
  blk.lambda = Array2d(nb, ns);
  blk.lambda.fill(0.0);
  blk.grad.assign(m->params().size(), 0.0);
  for (int hi = n; hi >= 1; hi -= 3) adjoint_chunk_solve(*m, traj, hi, 3, dL, blk);
  CHECK(rel_gap(blk.grad, seq.grad) <= 1e-12);
  for (int b = 0; b < nb; ++b)
    for (int c = 0; c < ns; ++c)
      CHECK(blk.lambda(b, c) == doctest::Approx(seq.lambda(b, c)).epsilon(1e-11));
}

TEST_CASE("gradients are invariant to the reverse chunk width") {
  auto m = build_chaboche(2, 2);
  Array2d y0(2, m->state_size());
  y0.fill(0.0);
  const auto grid = TimeGrid::uniform(32, 2, m->default_t_max());
  const auto loss = loss_frobenius();
  const NewtonSettings tight{1e-12, 1e-10, 100};

  const auto base = gradient_adjoint(*m, y0, grid, 1, loss, Scheme::backward_euler, SolverChoice{},
                                     JacobianStrategy::analytic, tight);
  for (int nc : {2, 8, 32}) {
    const auto other = gradient_adjoint(*m, y0, grid, nc, loss, Scheme::backward_euler,
                                        SolverChoice{}, JacobianStrategy::analytic, tight);
    CAPTURE(nc);
    CHECK(rel_gap(other.gradient, base.gradient) <= 1e-8);
    CHECK(std::fabs(other.loss - base.loss) <= 1e-8 * (1.0 + std::fabs(base.loss)));
  }
}

TEST_CASE("adjoint gradients agree with central differences") {
  auto m = build_neuron(1, 2);
  Array2d y0(2, m->state_size());
  y0.fill(0.2);
  const auto grid = TimeGrid::uniform(16, 2, 0.5);
  const auto loss = loss_frobenius();

  for (Scheme scheme : {Scheme::backward_euler, Scheme::forward_euler}) {
    const auto adj = gradient_adjoint(*m, y0, grid, 4, loss, scheme, SolverChoice{},
                                      preferred_jacobian_strategy(*m),
                                      NewtonSettings{1e-12, 1e-10, 100});
    const auto fd = gradient_fd_oracle(*m, y0, grid, loss, scheme);
    CAPTURE(int(scheme));
    CHECK(rel_gap(adj.gradient, fd) <= 1e-4);
  }
}

TEST_CASE("the reverse pass is linear in the loss gradient") {
  auto m = build_scalar_decay(0.6);
  Array2d y0(1, 1);
  y0(0, 0) = 1.0;
  const auto grid = TimeGrid::uniform(10, 1, 1.0);
  const auto traj = integrate_backward_euler(*m, y0, grid, 2, NewtonSettings{1e-13, 1e-12, 100});

  auto scaled = [&](double s) {
    LossSpec spec;
    spec.value = [s](const Trajectory& t) { return s * t.states(t.n_time(), 0); };
    spec.state_gradient = [s](const Trajectory& t, Array2d& g) {
      g.fill(0.0);
      g(t.n_time(), 0) = s;
    };
    return spec;
  };

  auto [l1, g1] = adjoint_backward(*m, traj, 5, scaled(1.0), Scheme::backward_euler);
  auto [l3, g3] = adjoint_backward(*m, traj, 5, scaled(3.0), Scheme::backward_euler);
  CHECK(l3 == doctest::Approx(3.0 * l1).epsilon(1e-14));
  CHECK(g3[0] == doctest::Approx(3.0 * g1[0]).epsilon(1e-13));
}

TEST_CASE("reverse-pass work scales with the chunk count") {
  auto m = build_mass_damper_spring(1, 1);
  Array2d y0(1, m->state_size());
  y0.fill(0.1);
  const int n = 24;
  const auto grid = TimeGrid::uniform(n, 1, 1.0);
  const auto loss = loss_frobenius();

  for (int nc : {1, 4, 6, 24}) {
    const auto res = gradient_adjoint(*m, y0, grid, nc, loss, Scheme::backward_euler);
    const long chunks = (n + nc - 1) / nc;
    CAPTURE(nc);
    // the implicit reverse pass solves one transposed block system per chunk
    CHECK(res.backward_work.linear_solves == chunks);
    CHECK(res.backward_work.jacobian_evals == chunks);
    // forward work unchanged by how the reverse pass is chunked
    CHECK(res.trajectory.work.newton_iterations > 0);
  }
}
