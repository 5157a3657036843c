#pragma once

#include "chunkode/linalg.hpp"
#include "chunkode/ode_model.hpp"
#include "chunkode/time_grid.hpp"

namespace chunkode {

struct NewtonSettings {
  double tol_a = 1e-8;   // absolute residual norm target, per batch lane
  double tol_r = 1e-6;   // relative-to-initial residual norm target
  int max_iter = 100;
};

// Deterministic work tallies. Evaluation counts are *batched calls*: one
// rate() invocation over a whole (chunk, batch) grid counts once.
struct WorkCounters {
  long newton_iterations = 0;
  long rate_evals = 0;
  long jacobian_evals = 0;
  long linear_solves = 0;
  long reduction_sweeps = 0;  // informational: PCR/hybrid sweeps executed

  WorkCounters& operator+=(const WorkCounters& o) {
    newton_iterations += o.newton_iterations;
    rate_evals += o.rate_evals;
    jacobian_evals += o.jacobian_evals;
    linear_solves += o.linear_solves;
    reduction_sweeps += o.reduction_sweeps;
    return *this;
  }
};

// Full integration result. states row i is the flattened (n_batch, n_size)
// state at step i; row 0 is the initial condition.
struct Trajectory {
  Array2d states;  // (n_time + 1, n_batch * n_size)
  TimeGrid grid;
  int n_batch = 0;
  int n_size = 0;
  WorkCounters work;

  int n_time() const { return states.rows() - 1; }
  std::span<double> point(int step, int b) {
    return states.row(step).subspan(size_t(b) * n_size, n_size);
  }
  std::span<const double> point(int step, int b) const {
    return states.row(step).subspan(size_t(b) * n_size, n_size);
  }
};

// Residual of one implicit chunk. With y_start the state entering the chunk
// and dy(j) the unknown increments (dy(-1) == 0 by convention),
//
//   out(j) = dy(j) - dy(j-1) - h(y_start + dy(j), t_chunk(j)) * dt_chunk(j)
//
// t_chunk/dt_chunk are (chunk_len, n_batch). Throws NonFiniteOutput when the
// rate comes back non-finite.
void chunk_residual(const OdeModel& model, const Array2d& y_start, const BatchedChunkVector& dy,
                    const Array2d& t_chunk, const Array2d& dt_chunk, BatchedChunkVector& out);

// Jacobian of chunk_residual with respect to the flattened dy: diagonal
// blocks I - J(y_start + dy(j), t_chunk(j)) * dt_chunk(j), sub-diagonal
// blocks -I.
void chunk_jacobian(const OdeModel& model, const Array2d& y_start, const BatchedChunkVector& dy,
                    const Array2d& t_chunk, const Array2d& dt_chunk, JacobianStrategy strategy,
                    BlockBidiagonalSystem& out);

// Newton's method on one chunk, starting from the dy passed in (pass zeros
// for the standard initial guess). A batch lane counts as converged when
// |r| <= tol_a or |r| <= tol_r * |r0|, with Euclidean norms over the lane's
// flattened (chunk, size) residual; the check runs before the first
// iteration, so an exactly-satisfied system costs zero iterations. Returns
// the iteration count; throws NewtonDivergence when the cap is reached or
// the residual stops being finite (chunk_start_step only labels the error).
int newton_solve_chunk(const OdeModel& model, const Array2d& y_start, BatchedChunkVector& dy,
                       const Array2d& t_chunk, const Array2d& dt_chunk,
                       const NewtonSettings& settings, const SolverChoice& solver,
                       JacobianStrategy strategy, WorkCounters* work = nullptr,
                       int chunk_start_step = 1);

// Implicit integration: n_time steps taken in chunks of n_chunk (the last
// chunk may be shorter), each chunk solved as one coupled block-bidiagonal
// Newton problem. The produced trajectory is chunk-size invariant up to
// Newton tolerances. y0 is (n_batch, n_size).
Trajectory integrate_backward_euler(const OdeModel& model, const Array2d& y0, const TimeGrid& grid,
                                    int n_chunk, const NewtonSettings& settings = {},
                                    const SolverChoice& solver = {},
                                    JacobianStrategy strategy = JacobianStrategy::analytic);

// Explicit integration, strictly step-sequential regardless of n_chunk (the
// dependency y_{i+1} = y_i + h(y_i, t_i) dt forbids grouping), so results
// are bitwise identical for every chunk size. Throws NonFiniteOutput naming
// the step at which the state or rate stops being finite.
Trajectory integrate_forward_euler(const OdeModel& model, const Array2d& y0, const TimeGrid& grid,
                                   int n_chunk = 1);

}  // namespace chunkode
