#pragma once

#include <stdexcept>
#include <string>

namespace chunkode {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An array argument has the wrong extents for the requested operation.
struct ShapeMismatch : Error {
  using Error::Error;
};

// A diagonal block turned out to be numerically singular during factorization.
// Carries which block so callers can report the offending chunk row / batch lane.
struct SingularBlock : Error {
  int chunk_index;
  int batch_index;
  SingularBlock(int chunk, int batch)
      : Error("singular diagonal block at chunk row " + std::to_string(chunk) +
              ", batch " + std::to_string(batch)),
        chunk_index(chunk),
        batch_index(batch) {}
};

// A guarded convenience routine was asked for a problem larger than it is
// willing to handle (dense assembly, finite-difference gradient sweeps).
struct SizeGuardExceeded : Error {
  using Error::Error;
};

// The requested derivative strategy is not available for this model.
struct StrategyUnavailable : Error {
  using Error::Error;
};

// A rate / Jacobian / state evaluation produced NaN or infinity.
struct NonFiniteOutput : Error {
  using Error::Error;
};

// Newton failed to satisfy its stopping rule within the iteration cap,
// or the residual stopped being finite.
struct NewtonDivergence : Error {
  int chunk_start_step;   // global index of the first step in the failing chunk
  int batch_index;        // worst batch lane
  int iterations;
  double residual_norm;
  double initial_norm;
  NewtonDivergence(int start_step, int batch, int iters, double rnorm, double r0norm)
      : Error("Newton did not converge for chunk starting at step " +
              std::to_string(start_step) + " (batch " + std::to_string(batch) +
              "): |r| = " + std::to_string(rnorm) + " after " +
              std::to_string(iters) + " iterations, |r0| = " + std::to_string(r0norm)),
        chunk_start_step(start_step),
        batch_index(batch),
        iterations(iters),
        residual_norm(rnorm),
        initial_norm(r0norm) {}
};

// A time grid violated monotonicity (every step must have dt > 0).
struct InvalidTimeGrid : Error {
  using Error::Error;
};

}  // namespace chunkode
