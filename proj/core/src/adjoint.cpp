#include "chunkode/adjoint.hpp"

#include <cmath>
#include <cstring>

namespace chunkode {

namespace {

// fac.lu serves as the single block store: the Jacobian strategy writes J
// into it, the rhs product reads J back out, and the transposed system is
// then built and factored in place, so no second block array is streamed.
struct BackwardWorkspace {
  BatchedChunkVector yy;  // states the Jacobian / quadrature are evaluated at
  Array2d t, dt;          // (c, n_batch)
  DiagonalFactorization fac;
  BatchedBlockArray offd_scratch;
  BatchedChunkVector rhs;   // loss jumps in, solve output (delta rows) out
  BatchedChunkVector w;     // quadrature weights lambda * dt
  std::vector<double> tmp;  // one J^T v product

  void resize(int c, int nb, int ns) {
    if (yy.n_chunk() == c && yy.n_batch() == nb && yy.n_size() == ns) return;
    yy = BatchedChunkVector(c, nb, ns);
    t = Array2d(c, nb);
    dt = Array2d(c, nb);
    fac.lu = BatchedBlockArray(c, nb, ns);
    offd_scratch = BatchedBlockArray(c > 1 ? c - 1 : 0, nb, ns);
    rhs = BatchedChunkVector(c, nb, ns);
    w = BatchedChunkVector(c, nb, ns);
    tmp.resize(ns);
  }
};

// tmp = J^T v for one row-major ns x ns block.
inline void gemv_transpose(const double* jac, const double* v, double* out, int ns) {
  for (int i = 0; i < ns; ++i) out[i] = 0.0;
  for (int j = 0; j < ns; ++j) {
    const double vj = v[j];
    const double* row = jac + size_t(j) * ns;
    for (int i = 0; i < ns; ++i) out[i] += row[i] * vj;
  }
}

// Reverse one chunk of implicit steps. Row r of the workspace arrays holds
// step m_r = step_hi - r (descending). On entry state.lambda is the adjoint
// of the step above the chunk; on exit it is the adjoint of the chunk's
// lowest step, and state.grad has gained the chunk's quadrature.
void be_chunk_core(const OdeModel& model, AdjointState& state, const SolverChoice& solver,
                   JacobianStrategy strategy, BackwardWorkspace& ws, WorkCounters* work) {
  const int c = ws.yy.n_chunk(), nb = ws.yy.n_batch(), ns = ws.yy.n_size();

  detail::jacobian_state_unscanned(model, ws.t, ws.yy, strategy, ws.fac.lu);
  if (work) ++work->jacobian_evals;

  // One pass per block while it is cache-hot: rhs_r += dt_r J_r^T
  // lambda_carry on top of the gathered loss jump, then the block is
  // transposed and scaled to (I - J dt)^T in place and LU-factored. The
  // couplings below the diagonal are exactly -I, so they are never
  // materialized and the solve runs its unit-coupling kernels. A non-finite
  // Jacobian surfaces through the pivot check or the gradient scan in
  // parameter_vjp.
  ws.fac.piv.resize(size_t(c) * nb * ns);
  for (int r = 0; r < c; ++r) {
    for (int b = 0; b < nb; ++b) {
      double* d = ws.fac.lu.block(r, b);
      const double dt = ws.dt(r, b);
      gemv_transpose(d, state.lambda.row(b).data(), ws.tmp.data(), ns);
      auto out = ws.rhs.point(r, b);
      for (int i = 0; i < ns; ++i) out[i] += dt * ws.tmp[i];
      for (int i = 0; i < ns; ++i) {
        for (int q = i + 1; q < ns; ++q) {
          const double a = d[size_t(i) * ns + q];
          d[size_t(i) * ns + q] = -dt * d[size_t(q) * ns + i];
          d[size_t(q) * ns + i] = -dt * a;
        }
        d[size_t(i) * ns + i] = 1.0 - dt * d[size_t(i) * ns + i];
      }
      if (!detail::lu_factor_block(d, ws.fac.pivots(r, b), ns)) throw SingularBlock(r, b);
    }
  }

  long sweeps = 0;
  if (solver.kind == SolverKind::thomas) {
    // Substitution in place on the rhs rows (delta_r = M_r^{-1}(rhs_r +
    // delta_{r-1})), the quadrature weight row w_r = (carry + delta_r) dt_r
    // built while the solved row is cache-hot.
    for (int r = 0; r < c; ++r) {
      for (int b = 0; b < nb; ++b) {
        double* x = ws.rhs.point(r, b).data();
        if (r > 0) {
          const double* prev = ws.rhs.point(r - 1, b).data();
          for (int i = 0; i < ns; ++i) x[i] += prev[i];
        }
        detail::lu_solve_vec(ws.fac.block(r, b), ws.fac.pivots(r, b), ns, x);
        const auto carry = state.lambda.row(b);
        auto wr = ws.w.point(r, b);
        const double dt = ws.dt(r, b);
        for (int i = 0; i < ns; ++i) wr[i] = (carry[i] + x[i]) * dt;
      }
    }
  } else {
    detail::solve_unit_offdiag(ws.fac, ws.offd_scratch, ws.rhs, solver, &sweeps);
    // lambda_r = carry + delta_r; quadrature weights lambda_r dt_r.
    for (int r = 0; r < c; ++r) {
      for (int b = 0; b < nb; ++b) {
        const auto carry = state.lambda.row(b);
        const auto delta = ws.rhs.point(r, b);
        auto wr = ws.w.point(r, b);
        const double dt = ws.dt(r, b);
        for (int i = 0; i < ns; ++i) wr[i] = (carry[i] + delta[i]) * dt;
      }
    }
  }
  if (work) {
    ++work->linear_solves;
    work->reduction_sweeps += sweeps;
  }
  parameter_vjp(model, ws.t, ws.yy, ws.w, state.grad);

  // New carry: the lowest row's lambda.
  for (int b = 0; b < nb; ++b) {
    auto carry = state.lambda.row(b);
    const auto delta = ws.rhs.point(c - 1, b);
    for (int i = 0; i < ns; ++i) carry[i] += delta[i];
  }
}

void check_adjoint_state(const OdeModel& model, const AdjointState& state, int nb) {
  require(state.lambda.rows() == nb && state.lambda.cols() == model.state_size(),
          "adjoint: lambda must be (n_batch, n_size)");
  require(state.grad.size() == model.params().size(),
          "adjoint: gradient accumulator length != parameter count");
}

void gather_be_chunk(const Trajectory& traj, int step_hi, int c, const Array2d& dL_dy,
                     BackwardWorkspace& ws) {
  const int nb = traj.n_batch, ns = traj.n_size;
  for (int r = 0; r < c; ++r) {
    const int m = step_hi - r;
    for (int b = 0; b < nb; ++b) {
      std::memcpy(ws.yy.point(r, b).data(), traj.point(m, b).data(), size_t(ns) * sizeof(double));
      std::memcpy(ws.rhs.point(r, b).data(), dL_dy.row(m).data() + size_t(b) * ns,
                  size_t(ns) * sizeof(double));
      ws.t(r, b) = traj.grid.time(m, b);
      ws.dt(r, b) = traj.grid.dt(m, b);
    }
  }
}

// Reverse one chunk of explicit steps [step_hi - c + 1, step_hi]. Row r holds
// step m_r = step_hi - r; the rate of step m is evaluated at (y_{m-1}, t_{m-1}),
// so the Jacobian/quadrature states are the step *starts*. The adjoint
// recurrence lambda_{m-1} = (I + J(y_{m-1}, t_{m-1})^T dt_m) lambda_m needs no
// linear solve; the marching inside the chunk is sequential (it is cheap),
// while the Jacobian evaluation and the parameter product stay batched.
void fe_chunk_core(const OdeModel& model, const Trajectory& traj, int step_hi, int c,
                   const Array2d& dL_dy, AdjointState& state, JacobianStrategy strategy,
                   BackwardWorkspace& ws, WorkCounters* work) {
  const int nb = traj.n_batch, ns = traj.n_size;
  for (int r = 0; r < c; ++r) {
    const int m = step_hi - r;
    for (int b = 0; b < nb; ++b) {
      std::memcpy(ws.yy.point(r, b).data(), traj.point(m - 1, b).data(),
                  size_t(ns) * sizeof(double));
      std::memcpy(ws.rhs.point(r, b).data(), dL_dy.row(m).data() + size_t(b) * ns,
                  size_t(ns) * sizeof(double));
      ws.t(r, b) = traj.grid.time(m - 1, b);
      ws.dt(r, b) = traj.grid.dt(m, b);
    }
  }
  jacobian_state(model, ws.t, ws.yy, strategy, ws.fac.lu);
  if (work) ++work->jacobian_evals;

  for (int r = 0; r < c; ++r) {
    for (int b = 0; b < nb; ++b) {
      auto lam = state.lambda.row(b);
      const auto jump = ws.rhs.point(r, b);
      const double dt = ws.dt(r, b);
      auto wr = ws.w.point(r, b);
      for (int i = 0; i < ns; ++i) lam[i] += jump[i];
      for (int i = 0; i < ns; ++i) wr[i] = lam[i] * dt;
      gemv_transpose(ws.fac.lu.block(r, b), lam.data(), ws.tmp.data(), ns);
      for (int i = 0; i < ns; ++i) lam[i] += dt * ws.tmp[i];
    }
  }
  parameter_vjp(model, ws.t, ws.yy, ws.w, state.grad);
}

void check_loss(const LossSpec& loss) {
  require(bool(loss.value) && bool(loss.state_gradient), "loss: both callbacks must be set");
}

}  // namespace

LossSpec loss_frobenius() {
  LossSpec spec;
  spec.value = [](const Trajectory& traj) {
    double s = 0.0;
    for (int step = 1; step <= traj.n_time(); ++step) {
      for (double x : traj.states.row(step)) s += x * x;
    }
    return std::sqrt(s);
  };
  spec.state_gradient = [](const Trajectory& traj, Array2d& g) {
    require(g.rows() == traj.states.rows() && g.cols() == traj.states.cols(),
            "loss gradient: output must be shaped like the trajectory states");
    double s = 0.0;
    for (int step = 1; step <= traj.n_time(); ++step)
      for (double x : traj.states.row(step)) s += x * x;
    const double norm = std::sqrt(s);
    auto r0 = g.row(0);
    for (auto& x : r0) x = 0.0;
    for (int step = 1; step <= traj.n_time(); ++step) {
      const auto y = traj.states.row(step);
      auto out = g.row(step);
      for (size_t i = 0; i < y.size(); ++i) out[i] = norm > 0.0 ? y[i] / norm : 0.0;
    }
  };
  return spec;
}

void adjoint_step_sequential(const OdeModel& model, const Array2d& y_i, const Array2d& y_prev,
                             std::span<const double> t_i, std::span<const double> t_prev,
                             const Array2d& dL_dy_i, AdjointState& state,
                             const SolverChoice& solver, JacobianStrategy strategy) {
  const int nb = y_i.rows(), ns = y_i.cols();
  require(ns == model.state_size(), "adjoint step: state width != model size");
  require(y_prev.rows() == nb && y_prev.cols() == ns, "adjoint step: y_prev shape");
  require(int(t_i.size()) == nb && int(t_prev.size()) == nb, "adjoint step: time spans");
  require(dL_dy_i.rows() == nb && dL_dy_i.cols() == ns, "adjoint step: loss jump shape");
  check_adjoint_state(model, state, nb);

  BackwardWorkspace ws;
  ws.resize(1, nb, ns);
  for (int b = 0; b < nb; ++b) {
    require(t_i[b] > t_prev[b], "adjoint step: dt must be positive");
    std::memcpy(ws.yy.point(0, b).data(), y_i.row(b).data(), size_t(ns) * sizeof(double));
    std::memcpy(ws.rhs.point(0, b).data(), dL_dy_i.row(b).data(), size_t(ns) * sizeof(double));
    ws.t(0, b) = t_i[b];
    ws.dt(0, b) = t_i[b] - t_prev[b];
  }
  be_chunk_core(model, state, solver, strategy, ws, nullptr);
}

void adjoint_chunk_solve(const OdeModel& model, const Trajectory& traj, int step_hi,
                         int chunk_len, const Array2d& dL_dy, AdjointState& state,
                         const SolverChoice& solver, JacobianStrategy strategy,
                         WorkCounters* work) {
  require(traj.n_size == model.state_size(), "adjoint chunk: trajectory width != model size");
  require(chunk_len >= 1 && step_hi >= chunk_len && step_hi <= traj.n_time(),
          "adjoint chunk: step range out of bounds");
  require(dL_dy.rows() == traj.states.rows() && dL_dy.cols() == traj.states.cols(),
          "adjoint chunk: dL_dy must be shaped like the trajectory states");
  check_adjoint_state(model, state, traj.n_batch);

  BackwardWorkspace ws;
  ws.resize(chunk_len, traj.n_batch, traj.n_size);
  gather_be_chunk(traj, step_hi, chunk_len, dL_dy, ws);
  be_chunk_core(model, state, solver, strategy, ws, work);
}

std::pair<double, std::vector<double>> adjoint_backward(
    const OdeModel& model, const Trajectory& traj, int n_chunk, const LossSpec& loss,
    Scheme scheme, const SolverChoice& solver, JacobianStrategy strategy, WorkCounters* work) {
  check_loss(loss);
  require(traj.n_size == model.state_size(), "adjoint: trajectory width != model size");
  require(n_chunk >= 1, "adjoint: n_chunk must be >= 1");
  const int nb = traj.n_batch, ns = traj.n_size, n_time = traj.n_time();

  const double L = loss.value(traj);
  Array2d dL(traj.states.rows(), traj.states.cols());
  loss.state_gradient(traj, dL);

  AdjointState state;
  state.lambda = Array2d(nb, ns);
  state.grad.assign(model.params().size(), 0.0);

  BackwardWorkspace ws;
  int step_hi = n_time;
  int cur = -1;
  while (step_hi >= 1) {
    const int c = std::min(n_chunk, step_hi);
    if (c != cur) {
      ws.resize(c, nb, ns);
      cur = c;
    }
    if (scheme == Scheme::backward_euler) {
      gather_be_chunk(traj, step_hi, c, dL, ws);
      be_chunk_core(model, state, solver, strategy, ws, work);
    } else {
      fe_chunk_core(model, traj, step_hi, c, dL, state, strategy, ws, work);
    }
    step_hi -= c;
  }
  return {L, std::move(state.grad)};
}

GradientResult gradient_adjoint(const OdeModel& model, const Array2d& y0, const TimeGrid& grid,
                                int n_chunk, const LossSpec& loss, Scheme scheme,
                                const SolverChoice& solver, JacobianStrategy strategy,
                                const NewtonSettings& settings) {
  GradientResult res;
  res.trajectory = scheme == Scheme::backward_euler
                       ? integrate_backward_euler(model, y0, grid, n_chunk, settings, solver,
                                                  strategy)
                       : integrate_forward_euler(model, y0, grid, n_chunk);
  auto [L, g] = adjoint_backward(model, res.trajectory, n_chunk, loss, scheme, solver, strategy,
                                 &res.backward_work);
  res.loss = L;
  res.gradient = std::move(g);
  return res;
}

std::vector<double> gradient_fd_oracle(const OdeModel& model, const Array2d& y0,
                                       const TimeGrid& grid, const LossSpec& loss, Scheme scheme,
                                       const NewtonSettings& settings) {
  check_loss(loss);
  const std::vector<double>& p0 = model.params();
  if (p0.size() > 500)
    throw SizeGuardExceeded("finite-difference gradient guarded to 500 parameters, got " +
                            std::to_string(p0.size()));
  const JacobianStrategy strategy = preferred_jacobian_strategy(model);

  std::vector<double> g(p0.size(), 0.0), p(p0);
  for (size_t j = 0; j < p0.size(); ++j) {
    const double delta = 1e-6 * (1.0 + std::fabs(p0[j]));
    double L[2];
    for (int side = 0; side < 2; ++side) {
      p[j] = p0[j] + (side == 0 ? delta : -delta);
      auto m = model.with_params(p);
      Trajectory traj = scheme == Scheme::backward_euler
                            ? integrate_backward_euler(*m, y0, grid, 1, settings, SolverChoice{},
                                                       strategy)
                            : integrate_forward_euler(*m, y0, grid, 1);
      L[side] = loss.value(traj);
    }
    p[j] = p0[j];
    g[j] = (L[0] - L[1]) / (2.0 * delta);
  }
  return g;
}

}  // namespace chunkode
