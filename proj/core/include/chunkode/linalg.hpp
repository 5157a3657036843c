#pragma once

#include <vector>

#include "chunkode/arrays.hpp"

namespace chunkode {

// Lower block-bidiagonal system, batched over independent batch lanes:
//
//   [ A_1              ] [x_1]   [y_1]
//   [ B_1 A_2          ] [x_2] = [y_2]
//   [     B_2 A_3      ] [x_3]   [y_3]
//   [          ...  A_n] [x_n]   [y_n]
//
// diag holds A_1..A_n as (n_chunk, n_batch, n_size, n_size); offdiag holds
// B_1..B_{n-1} as (n_chunk-1, n_batch, n_size, n_size). Every batch lane is
// an independent system sharing the structure.
struct BlockBidiagonalSystem {
  BatchedBlockArray diag;
  BatchedBlockArray offdiag;

  BlockBidiagonalSystem() = default;
  BlockBidiagonalSystem(int n_chunk, int n_batch, int n_size)
      : diag(n_chunk, n_batch, n_size),
        offdiag(n_chunk > 1 ? n_chunk - 1 : 0, n_batch, n_size) {}

  int n_chunk() const { return diag.n_chunk(); }
  int n_batch() const { return diag.n_batch(); }
  int n_size() const { return diag.n_size(); }
};

// LU factors (partial pivoting) of every diagonal block, packed like the
// blocks themselves. Factor once, then reuse for every solve against the
// same matrix; no explicit inverse is ever formed. The lu array doubles as
// the assembly target for hot loops that factor in place instead of copying.
struct DiagonalFactorization {
  BatchedBlockArray lu;  // (n_chunk, n_batch, n_size, n_size), L\U packed
  std::vector<int> piv;  // (n_chunk, n_batch, n_size) row swap targets

  int n_chunk() const { return lu.n_chunk(); }
  int n_batch() const { return lu.n_batch(); }
  int n_size() const { return lu.n_size(); }

  double* block(int k, int b) { return lu.block(k, b); }
  const double* block(int k, int b) const { return lu.block(k, b); }
  int* pivots(int k, int b) { return piv.data() + (size_t(k) * n_batch() + b) * n_size(); }
  const int* pivots(int k, int b) const {
    return piv.data() + (size_t(k) * n_batch() + b) * n_size();
  }
};

// Factor all diagonal blocks. Throws SingularBlock (with chunk/batch indices)
// when a pivot falls below 1e-14 times the block's max-norm.
DiagonalFactorization factor_diagonal_blocks(const BlockBidiagonalSystem& sys);

// Sequential block forward substitution: x_1 = A_1^{-1} y_1, then
// x_{k+1} = A_{k+1}^{-1} (y_{k+1} - B_k x_k). Deterministic and bitwise
// reproducible per batch lane.
BatchedChunkVector solve_thomas(const BlockBidiagonalSystem& sys, const BatchedChunkVector& rhs);

// Parallel cyclic reduction. Each sweep with stride s eliminates the
// coupling of row k to row k-s:
//   y_k      <- y_k - B_k A_{k-s}^{-1} y_{k-s}
//   B_k(new) <- -B_k A_{k-s}^{-1} B_{k-s}
// doubling the stride until rows decouple, then x_k = A_k^{-1} y_k.
// A chunk count that is not a power of two is split into contiguous
// partitions of descending power-of-two sizes (for example 7 = 4 + 2 + 1)
// processed in increasing row order; each solved partition feeds its last
// row into the right-hand side of the next. A partition of size 2^e takes
// exactly e sweeps; if sweep_count is non-null the total over partitions is
// written there.
BatchedChunkVector solve_pcr(const BlockBidiagonalSystem& sys, const BatchedChunkVector& rhs,
                             long* sweep_count = nullptr);

// Runs n_switch reduction sweeps, then finishes each of the remaining
// independent strided chains with forward substitution. n_switch = 0 is
// plain forward substitution; n_switch >= ceil(log2 n_chunk) is full
// reduction. Applied per partition with the same splitting as solve_pcr.
BatchedChunkVector solve_hybrid(const BlockBidiagonalSystem& sys, const BatchedChunkVector& rhs,
                                int n_switch, long* sweep_count = nullptr);

// Reference solver: assembles each batch lane as one dense
// (n_chunk*n_size)^2 matrix and solves it with an unrelated dense LU.
// Guarded to n_chunk * n_size <= 512 (throws SizeGuardExceeded).
BatchedChunkVector solve_dense_oracle(const BlockBidiagonalSystem& sys,
                                      const BatchedChunkVector& rhs);

enum class SolverKind { thomas, pcr, hybrid };

// One knob for "which solver": hybrid carries its switch depth.
struct SolverChoice {
  SolverKind kind = SolverKind::thomas;
  int n_switch = 1;  // used by hybrid only
};

namespace detail {

// In-place kernels shared by the public solvers and the integrator's Newton
// loop (which reuses workspaces across iterations).

// LU with partial pivoting on one n x n row-major block; a == lu output.
// Returns false when a pivot is negligible relative to the block max-norm.
bool lu_factor_block(double* a, int* piv, int n);

// Solve A x = y in place given packed LU and pivots.
void lu_solve_vec(const double* lu, const int* piv, int n, double* y);

// Solve X A = Y in place for a row-major m x n matrix Y (right division by A).
void lu_right_solve_mat(const double* lu, const int* piv, int n, double* y, int m);

void factor_into(const BlockBidiagonalSystem& sys, DiagonalFactorization& f);

// Factor the blocks already sitting in f.lu, overwriting them with their LU
// factors. Hot loops assemble the diagonal blocks straight into f.lu and call
// this to skip the copy that factor_into makes to preserve its input.
void factor_inplace(DiagonalFactorization& f);

// Forward substitution given precomputed factors; rhs carries the solution
// on exit.
void thomas_into(const BlockBidiagonalSystem& sys, const DiagonalFactorization& f,
                 BatchedChunkVector& rhs_in_x_out);

// Forward substitution specialized to off-diagonal blocks that are exactly -I,
// as produced by the implicit stepper and its transpose system. Skips the
// block mat-vec: x_k = L_k^{-1} (r_k + x_{k-1}).
void thomas_unit_into(const DiagonalFactorization& f, BatchedChunkVector& rhs_in_x_out);

// Same substitution reading the right-hand side from rhs and writing the
// solution to x, so callers that must keep rhs intact skip the bulk copy.
void thomas_unit_from(const DiagonalFactorization& f, const BatchedChunkVector& rhs,
                      BatchedChunkVector& x);

// Reduction sweeps followed by forward substitution on the surviving strided
// chains, per power-of-two partition. offdiag_scratch must be a copy of the
// system's off-diagonal blocks on entry and is destroyed. n_switch < 0 means
// "reduce fully" (the PCR path); n_switch >= 0 caps the sweeps per partition
// (the hybrid path). Accumulates sweeps into *sweep_count when non-null.
void strided_solve_into(const DiagonalFactorization& f, BatchedBlockArray& offdiag_scratch,
                        BatchedChunkVector& rhs_in_x_out, int n_switch, long* sweep_count);

// Dispatch on SolverChoice using preallocated scratch (hot path). The
// scratch block array is only touched for the reduction-based solvers.
void solve_with_choice(const BlockBidiagonalSystem& sys, const DiagonalFactorization& f,
                       BatchedBlockArray& offdiag_scratch, BatchedChunkVector& rhs_in_x_out,
                       SolverChoice choice, long* sweep_count = nullptr);

// Same dispatch for systems whose off-diagonal blocks are exactly -I (the
// stepper matrices and their transposes). No system object is needed: thomas
// runs its unit-coupling kernel and the reduction solvers stamp -I into the
// scratch array themselves.
void solve_unit_offdiag(const DiagonalFactorization& f, BatchedBlockArray& offdiag_scratch,
                        BatchedChunkVector& rhs_in_x_out, SolverChoice choice,
                        long* sweep_count = nullptr);

}  // namespace detail

}  // namespace chunkode
