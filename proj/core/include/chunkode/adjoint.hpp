#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "chunkode/integrate.hpp"

namespace chunkode {

enum class Scheme { backward_euler, forward_euler };

// A scalar loss over a whole trajectory plus its gradient with respect to
// every stored state. state_gradient fills an array shaped like
// Trajectory::states (row 0 = initial condition, typically zero there).
struct LossSpec {
  std::function<double(const Trajectory&)> value;
  std::function<void(const Trajectory&, Array2d&)> state_gradient;
};

// Square root of the sum of squares of every state entry over steps
// 1..n_time, all batches and components; the initial condition is excluded.
LossSpec loss_frobenius();

// Marching state of the reverse pass: the adjoint vector per batch lane and
// the parameter-gradient accumulator.
struct AdjointState {
  Array2d lambda;            // (n_batch, n_size)
  std::vector<double> grad;  // length = model parameter count
};

// One reverse step of the discrete backward-Euler adjoint. Applies the loss
// jump at step i, solves the transposed step matrix
// (I - J(y_i, t_i) dt_i)^T lambda = lambda_hat, and accumulates
// dt_i * lambda . dh/dp(y_i, t_i) into the gradient. y_prev/t_prev identify
// the lower end of the step (dt_i = t_i - t_prev). The result replaces
// state.lambda, to be carried into the next step down.
void adjoint_step_sequential(const OdeModel& model, const Array2d& y_i, const Array2d& y_prev,
                             std::span<const double> t_i, std::span<const double> t_prev,
                             const Array2d& dL_dy_i, AdjointState& state,
                             const SolverChoice& solver = {},
                             JacobianStrategy strategy = JacobianStrategy::analytic);

// Reverses chunk_len backward-Euler steps [step_hi - chunk_len + 1, step_hi]
// in one coupled solve. Writing lambda_{m} = lambda_carry + delta_m turns the
// per-step recurrence into a lower block-bidiagonal system with diagonal
// blocks (I - J_m dt_m)^T and -I couplings — the same structure as the
// forward chunk system — solved with the same solver. Gradient quadrature
// and the lambda update match the sequential form exactly (one batched
// Jacobian evaluation and one batched parameter product per chunk).
// dL_dy is the full per-step loss gradient, shaped like Trajectory::states.
void adjoint_chunk_solve(const OdeModel& model, const Trajectory& traj, int step_hi,
                         int chunk_len, const Array2d& dL_dy, AdjointState& state,
                         const SolverChoice& solver = {},
                         JacobianStrategy strategy = JacobianStrategy::analytic,
                         WorkCounters* work = nullptr);

// Reverse pass over an existing trajectory: evaluates the loss and its
// parameter gradient by the discrete adjoint of the named scheme, chunking
// the backward sweep by n_chunk (taken from the final step downward; only
// one chunk of adjoint states is ever alive). Returns (loss, gradient).
std::pair<double, std::vector<double>> adjoint_backward(
    const OdeModel& model, const Trajectory& traj, int n_chunk, const LossSpec& loss,
    Scheme scheme, const SolverChoice& solver = {},
    JacobianStrategy strategy = JacobianStrategy::analytic, WorkCounters* work = nullptr);

struct GradientResult {
  double loss = 0.0;
  std::vector<double> gradient;
  Trajectory trajectory;      // forward solution (holds the forward work counters)
  WorkCounters backward_work; // solves/Jacobians spent in the reverse pass
};

// Forward integration followed by the matching discrete adjoint.
GradientResult gradient_adjoint(const OdeModel& model, const Array2d& y0, const TimeGrid& grid,
                                int n_chunk, const LossSpec& loss, Scheme scheme,
                                const SolverChoice& solver = {},
                                JacobianStrategy strategy = JacobianStrategy::analytic,
                                const NewtonSettings& settings = {});

// Central-difference reference gradient: re-integrates the model at p_j +/- d
// with d = 1e-6 (1 + |p_j|) and differences the loss. Sequential stepping
// (n_chunk = 1) and, for the implicit scheme, tighter-than-default Newton
// tolerances keep solver noise out of the differences. Guarded to at most
// 500 parameters (throws SizeGuardExceeded).
std::vector<double> gradient_fd_oracle(
    const OdeModel& model, const Array2d& y0, const TimeGrid& grid, const LossSpec& loss,
    Scheme scheme, const NewtonSettings& settings = NewtonSettings{1e-12, 1e-10, 100});

}  // namespace chunkode
