#include "chunkode/integrate.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

namespace chunkode {

namespace {

void check_chunk_args(const OdeModel& model, const Array2d& y_start, const BatchedChunkVector& dy,
                      const Array2d& t_chunk, const Array2d& dt_chunk) {
  require(y_start.cols() == model.state_size(), "chunk op: y_start width != state size");
  require(dy.n_size() == model.state_size(), "chunk op: dy width != state size");
  require(y_start.rows() == dy.n_batch(), "chunk op: y_start rows != batch width");
  require(t_chunk.rows() == dy.n_chunk() && t_chunk.cols() == dy.n_batch(),
          "chunk op: t_chunk must be (chunk_len, n_batch)");
  require(dt_chunk.rows() == dy.n_chunk() && dt_chunk.cols() == dy.n_batch(),
          "chunk op: dt_chunk must be (chunk_len, n_batch)");
}

void build_yy(const Array2d& y_start, const BatchedChunkVector& dy, BatchedChunkVector& yy) {
  const int c = dy.n_chunk(), nb = dy.n_batch(), ns = dy.n_size();
  for (int k = 0; k < c; ++k) {
    for (int b = 0; b < nb; ++b) {
      const auto ys = y_start.row(b);
      const auto d = dy.point(k, b);
      auto out = yy.point(k, b);
      for (int i = 0; i < ns; ++i) out[i] = ys[i] + d[i];
    }
  }
}

// yy = y_start + dy, h = rate(yy), r = bidiagonal combination in the
// increment formulation. No finiteness policy here; the public op and the
// Newton loop differ on that.
void residual_into(const OdeModel& model, const Array2d& y_start, const BatchedChunkVector& dy,
                   const Array2d& t_chunk, const Array2d& dt_chunk, BatchedChunkVector& yy,
                   BatchedChunkVector& h, BatchedChunkVector& r) {
  const int c = dy.n_chunk(), nb = dy.n_batch(), ns = dy.n_size();
  build_yy(y_start, dy, yy);
  model.rate(t_chunk, yy, h);
  for (int k = 0; k < c; ++k) {
    for (int b = 0; b < nb; ++b) {
      const double dt = dt_chunk(k, b);
      const auto d = dy.point(k, b);
      const auto hp = h.point(k, b);
      auto out = r.point(k, b);
      if (k == 0) {
        for (int i = 0; i < ns; ++i) out[i] = d[i] - hp[i] * dt;
      } else {
        const auto dm = dy.point(k - 1, b);
        for (int i = 0; i < ns; ++i) out[i] = d[i] - dm[i] - hp[i] * dt;
      }
    }
  }
}

// Hot-path residual in the state formulation (dy_k - dy_{k-1} == yy_k -
// yy_{k-1}, and dy_0 == yy_0 - y_start): the rate output is overwritten in
// place by the residual rows and the per-lane Euclidean norms accumulate in
// the same pass, so the Newton loop streams one array instead of three.
void rate_residual_norms(const OdeModel& model, const Array2d& y_start, const Array2d& t_chunk,
                         const Array2d& dt_chunk, const BatchedChunkVector& yy,
                         BatchedChunkVector& h_in_r_out, std::vector<double>& norms) {
  const int c = yy.n_chunk(), nb = yy.n_batch(), ns = yy.n_size();
  model.rate(t_chunk, yy, h_in_r_out);
  norms.assign(nb, 0.0);
  for (int k = 0; k < c; ++k) {
    for (int b = 0; b < nb; ++b) {
      const double dt = dt_chunk(k, b);
      const auto yk = yy.point(k, b);
      auto out = h_in_r_out.point(k, b);
      double s = 0.0;
      if (k == 0) {
        const auto ys = y_start.row(b);
        for (int i = 0; i < ns; ++i) {
          const double v = yk[i] - ys[i] - out[i] * dt;
          out[i] = v;
          s += v * v;
        }
      } else {
        const auto ym = yy.point(k - 1, b);
        for (int i = 0; i < ns; ++i) {
          const double v = yk[i] - ym[i] - out[i] * dt;
          out[i] = v;
          s += v * v;
        }
      }
      norms[b] += s;
    }
  }
  for (double& x : norms) x = std::sqrt(x);
}

// Diagonal-block assembly (I - J dt) into preallocated block storage; yy must
// already hold y_start + dy. The off-diagonal blocks of the implicit system
// are exactly -I, so they are never materialized on the hot path; the Newton
// loop hands the solver its unit-coupling entry point instead.
void jacobian_into(const OdeModel& model, const BatchedChunkVector& yy, const Array2d& t_chunk,
                   const Array2d& dt_chunk, JacobianStrategy strategy, BatchedBlockArray& diag) {
  const int c = yy.n_chunk(), nb = yy.n_batch(), ns = yy.n_size();
  jacobian_state(model, t_chunk, yy, strategy, diag);
  for (int k = 0; k < c; ++k) {
    for (int b = 0; b < nb; ++b) {
      double* blk = diag.block(k, b);
      const double dt = dt_chunk(k, b);
      for (int i = 0; i < ns * ns; ++i) blk[i] = -dt * blk[i];
      for (int i = 0; i < ns; ++i) blk[i * ns + i] += 1.0;
    }
  }
}

// Assembly fused with factoring: jacobian_state writes the raw blocks into
// fac.lu, then each block is scaled to I - J dt and LU-factored while it is
// still cache-hot, instead of streaming the whole block array twice.
void assemble_factor(const OdeModel& model, const BatchedChunkVector& yy, const Array2d& t_chunk,
                     const Array2d& dt_chunk, JacobianStrategy strategy,
                     DiagonalFactorization& fac) {
  const int c = yy.n_chunk(), nb = yy.n_batch(), ns = yy.n_size();
  // a non-finite Jacobian surfaces through the pivot check below or the
  // residual-norm checks in the Newton loop, so no separate scan is needed
  detail::jacobian_state_unscanned(model, t_chunk, yy, strategy, fac.lu);
  fac.piv.resize(size_t(c) * nb * ns);
  for (int k = 0; k < c; ++k) {
    for (int b = 0; b < nb; ++b) {
      double* blk = fac.lu.block(k, b);
      const double dt = dt_chunk(k, b);
      for (int i = 0; i < ns * ns; ++i) blk[i] = -dt * blk[i];
      for (int i = 0; i < ns; ++i) blk[i * ns + i] += 1.0;
      if (!detail::lu_factor_block(blk, fac.pivots(k, b), ns)) throw SingularBlock(k, b);
    }
  }
}

// Stamp the -I couplings; only the public assembly entry point and tests
// materialize them.
void fill_unit_offdiag(BlockBidiagonalSystem& sys) {
  const int c = sys.n_chunk(), nb = sys.n_batch(), ns = sys.n_size();
  if (c <= 1) return;
  sys.offdiag.fill(0.0);
  for (int k = 0; k + 1 < c; ++k)
    for (int b = 0; b < nb; ++b)
      for (int i = 0; i < ns; ++i) sys.offdiag(k, b, i, i) = -1.0;
}

// The loop iterates on the states yy directly; hr holds the rate evaluation,
// is overwritten by the residual, and the solve then runs in place on it, so
// the working set is two chunk vectors plus the factorization.
struct NewtonWorkspace {
  BatchedChunkVector yy, hr;
  DiagonalFactorization fac;  // fac.lu doubles as the Jacobian assembly target
  BatchedBlockArray offd_scratch;
  std::vector<double> r0, rn;

  void resize(int c, int nb, int ns) {
    if (yy.n_chunk() == c && yy.n_batch() == nb && yy.n_size() == ns) return;
    yy = BatchedChunkVector(c, nb, ns);
    hr = BatchedChunkVector(c, nb, ns);
    fac.lu = BatchedBlockArray(c, nb, ns);
    offd_scratch = BatchedBlockArray(c > 1 ? c - 1 : 0, nb, ns);
  }
};

// Index of the lane farthest from convergence (non-finite wins outright).
int worst_lane(const std::vector<double>& rn) {
  int w = 0;
  for (int b = 0; b < int(rn.size()); ++b) {
    if (!std::isfinite(rn[b])) return b;
    if (rn[b] > rn[w]) w = b;
  }
  return w;
}

bool lanes_converged(const std::vector<double>& rn, const std::vector<double>& r0,
                     const NewtonSettings& st) {
  for (size_t b = 0; b < rn.size(); ++b) {
    if (!(rn[b] <= st.tol_a || rn[b] <= st.tol_r * r0[b])) return false;
  }
  return true;
}

bool lanes_finite(const std::vector<double>& rn) {
  for (double x : rn)
    if (!std::isfinite(x)) return false;
  return true;
}

// Core Newton iteration on the chunk states. ws.yy must hold the initial
// iterate on entry and carries the converged states on return.
int newton_chunk(const OdeModel& model, const Array2d& y_start, const Array2d& t_chunk,
                 const Array2d& dt_chunk, const NewtonSettings& st, const SolverChoice& solver,
                 JacobianStrategy strategy, NewtonWorkspace& ws, WorkCounters* work,
                 int start_step) {
  rate_residual_norms(model, y_start, t_chunk, dt_chunk, ws.yy, ws.hr, ws.r0);
  if (work) ++work->rate_evals;
  ws.rn = ws.r0;
  if (!lanes_finite(ws.rn)) {
    const int b = worst_lane(ws.rn);
    throw NewtonDivergence(start_step, b, 0, ws.rn[b], ws.r0[b]);
  }
  if (lanes_converged(ws.rn, ws.r0, st)) return 0;

  const int c = ws.yy.n_chunk(), nb = ws.yy.n_batch(), ns = ws.yy.n_size();
  for (int it = 1; it <= st.max_iter; ++it) {
    long sweeps = 0;
    if (solver.kind == SolverKind::thomas) {
      // The chunk-wide Jacobian evaluation fills fac.lu with J; everything
      // downstream of it runs as one pass per block while the block is
      // cache-hot: scale to I - J*dt, factor, substitute
      // (x_k = (I - J_k dt_k)^{-1}(r_k + x_{k-1})), and apply yy_k -= x_k.
      detail::jacobian_state_unscanned(model, t_chunk, ws.yy, strategy, ws.fac.lu);
      ws.fac.piv.resize(size_t(c) * nb * ns);
      for (int k = 0; k < c; ++k) {
        for (int b = 0; b < nb; ++b) {
          double* blk = ws.fac.lu.block(k, b);
          const double dt = dt_chunk(k, b);
          for (int i = 0; i < ns * ns; ++i) blk[i] = -dt * blk[i];
          for (int i = 0; i < ns; ++i) blk[i * ns + i] += 1.0;
          if (!detail::lu_factor_block(blk, ws.fac.pivots(k, b), ns)) throw SingularBlock(k, b);
          double* x = ws.hr.point(k, b).data();
          if (k > 0) {
            const double* prev = ws.hr.point(k - 1, b).data();
            for (int i = 0; i < ns; ++i) x[i] += prev[i];
          }
          detail::lu_solve_vec(blk, ws.fac.pivots(k, b), ns, x);
          auto yyp = ws.yy.point(k, b);
          for (int i = 0; i < ns; ++i) yyp[i] -= x[i];
        }
      }
    } else {
      assemble_factor(model, ws.yy, t_chunk, dt_chunk, strategy, ws.fac);
      detail::solve_unit_offdiag(ws.fac, ws.offd_scratch, ws.hr, solver, &sweeps);
      double* yyp = ws.yy.data();
      const double* x = ws.hr.data();
      for (size_t i = 0; i < ws.yy.size(); ++i) yyp[i] -= x[i];
    }
    if (work) {
      ++work->jacobian_evals;
      ++work->linear_solves;
      ++work->newton_iterations;
      work->reduction_sweeps += sweeps;
    }
    rate_residual_norms(model, y_start, t_chunk, dt_chunk, ws.yy, ws.hr, ws.rn);
    if (work) ++work->rate_evals;
    if (!lanes_finite(ws.rn)) {
      const int b = worst_lane(ws.rn);
      throw NewtonDivergence(start_step, b, it, ws.rn[b], ws.r0[b]);
    }
    if (lanes_converged(ws.rn, ws.r0, st)) return it;
  }
  const int b = worst_lane(ws.rn);
  throw NewtonDivergence(start_step, b, st.max_iter, ws.rn[b], ws.r0[b]);
}

void check_integrate_args(const OdeModel& model, const Array2d& y0, const TimeGrid& grid,
                          int n_chunk) {
  require(y0.cols() == model.state_size(), "integrate: y0 width != state size");
  require(y0.rows() == grid.n_batch(), "integrate: y0 rows != grid batch width");
  require(model.n_batch() == 0 || model.n_batch() == y0.rows(),
          "integrate: model batch width != y0 rows");
  require(grid.n_time() >= 1, "integrate: need at least one step");
  require(n_chunk >= 1, "integrate: n_chunk must be >= 1");
}

}  // namespace

void chunk_residual(const OdeModel& model, const Array2d& y_start, const BatchedChunkVector& dy,
                    const Array2d& t_chunk, const Array2d& dt_chunk, BatchedChunkVector& out) {
  check_chunk_args(model, y_start, dy, t_chunk, dt_chunk);
  require(out.same_shape(dy), "chunk_residual: out must match dy");
  BatchedChunkVector yy(dy.n_chunk(), dy.n_batch(), dy.n_size());
  BatchedChunkVector h(dy.n_chunk(), dy.n_batch(), dy.n_size());
  residual_into(model, y_start, dy, t_chunk, dt_chunk, yy, h, out);
  if (!all_finite({h.data(), h.size()}))
    throw NonFiniteOutput("chunk_residual: model rate returned a non-finite value");
}

void chunk_jacobian(const OdeModel& model, const Array2d& y_start, const BatchedChunkVector& dy,
                    const Array2d& t_chunk, const Array2d& dt_chunk, JacobianStrategy strategy,
                    BlockBidiagonalSystem& out) {
  check_chunk_args(model, y_start, dy, t_chunk, dt_chunk);
  require(out.n_chunk() == dy.n_chunk() && out.n_batch() == dy.n_batch() &&
              out.n_size() == dy.n_size(),
          "chunk_jacobian: out system shape must match dy");
  BatchedChunkVector yy(dy.n_chunk(), dy.n_batch(), dy.n_size());
  for (int k = 0; k < dy.n_chunk(); ++k)
    for (int b = 0; b < dy.n_batch(); ++b) {
      const auto ys = y_start.row(b);
      const auto d = dy.point(k, b);
      auto p = yy.point(k, b);
      for (int i = 0; i < dy.n_size(); ++i) p[i] = ys[i] + d[i];
    }
  jacobian_into(model, yy, t_chunk, dt_chunk, strategy, out.diag);
  fill_unit_offdiag(out);
}

int newton_solve_chunk(const OdeModel& model, const Array2d& y_start, BatchedChunkVector& dy,
                       const Array2d& t_chunk, const Array2d& dt_chunk,
                       const NewtonSettings& settings, const SolverChoice& solver,
                       JacobianStrategy strategy, WorkCounters* work, int chunk_start_step) {
  check_chunk_args(model, y_start, dy, t_chunk, dt_chunk);
  const int c = dy.n_chunk(), nb = dy.n_batch(), ns = dy.n_size();
  NewtonWorkspace ws;
  ws.resize(c, nb, ns);
  build_yy(y_start, dy, ws.yy);
  const int iters = newton_chunk(model, y_start, t_chunk, dt_chunk, settings, solver, strategy, ws,
                                 work, chunk_start_step);
  for (int k = 0; k < c; ++k) {
    for (int b = 0; b < nb; ++b) {
      const auto ys = y_start.row(b);
      const auto p = ws.yy.point(k, b);
      auto d = dy.point(k, b);
      for (int i = 0; i < ns; ++i) d[i] = p[i] - ys[i];
    }
  }
  return iters;
}

Trajectory integrate_backward_euler(const OdeModel& model, const Array2d& y0, const TimeGrid& grid,
                                    int n_chunk, const NewtonSettings& settings,
                                    const SolverChoice& solver, JacobianStrategy strategy) {
  check_integrate_args(model, y0, grid, n_chunk);
  const int nb = y0.rows(), ns = y0.cols(), n_time = grid.n_time();

  Trajectory traj;
  traj.states = Array2d(n_time + 1, nb * ns);
  traj.grid = grid;
  traj.n_batch = nb;
  traj.n_size = ns;
  std::memcpy(traj.states.row(0).data(), y0.data(), size_t(nb) * ns * sizeof(double));

  NewtonWorkspace ws;
  Array2d y_start(nb, ns);
  Array2d t_chunk, dt_chunk;

  int step = 0;
  int cur = -1;
  while (step < n_time) {
    const int c = std::min(n_chunk, n_time - step);
    if (c != cur) {
      ws.resize(c, nb, ns);
      t_chunk = Array2d(c, nb);
      dt_chunk = Array2d(c, nb);
      cur = c;
    }
    std::memcpy(y_start.data(), traj.states.row(step).data(), size_t(nb) * ns * sizeof(double));
    for (int j = 0; j < c; ++j) {
      for (int b = 0; b < nb; ++b) {
        t_chunk(j, b) = grid.time(step + 1 + j, b);
        dt_chunk(j, b) = grid.dt(step + 1 + j, b);
      }
    }
    // Initial iterate: hold every point in the chunk at the start state.
    for (int j = 0; j < c; ++j)
      for (int b = 0; b < nb; ++b)
        std::memcpy(ws.yy.point(j, b).data(), y_start.row(b).data(), size_t(ns) * sizeof(double));
    newton_chunk(model, y_start, t_chunk, dt_chunk, settings, solver, strategy, ws, &traj.work,
                 step + 1);
    // A chunk row of ws.yy is laid out (batch, component), matching a
    // trajectory row exactly.
    for (int j = 0; j < c; ++j)
      std::memcpy(traj.states.row(step + 1 + j).data(), ws.yy.point(j, 0).data(),
                  size_t(nb) * ns * sizeof(double));
    step += c;
  }
  return traj;
}

Trajectory integrate_forward_euler(const OdeModel& model, const Array2d& y0, const TimeGrid& grid,
                                   int n_chunk) {
  check_integrate_args(model, y0, grid, n_chunk);
  const int nb = y0.rows(), ns = y0.cols(), n_time = grid.n_time();

  Trajectory traj;
  traj.states = Array2d(n_time + 1, nb * ns);
  traj.grid = grid;
  traj.n_batch = nb;
  traj.n_size = ns;
  std::memcpy(traj.states.row(0).data(), y0.data(), size_t(nb) * ns * sizeof(double));

  Array2d t_prev(1, nb);
  BatchedChunkVector y_prev(1, nb, ns), h(1, nb, ns);
  std::memcpy(y_prev.data(), y0.data(), size_t(nb) * ns * sizeof(double));

  for (int s = 1; s <= n_time; ++s) {
    for (int b = 0; b < nb; ++b) t_prev(0, b) = grid.time(s - 1, b);
    model.rate(t_prev, y_prev, h);
    ++traj.work.rate_evals;
    auto row = traj.states.row(s);
    for (int b = 0; b < nb; ++b) {
      const double dt = grid.dt(s, b);
      auto yp = y_prev.point(0, b);
      const auto hp = h.point(0, b);
      for (int i = 0; i < ns; ++i) {
        const double v = yp[i] + hp[i] * dt;
        row[size_t(b) * ns + i] = v;
        yp[i] = v;
      }
    }
    if (!all_finite(traj.states.row(s)))
      throw NonFiniteOutput("forward Euler produced a non-finite state at step " +
                            std::to_string(s));
  }
  return traj;
}

}  // namespace chunkode
