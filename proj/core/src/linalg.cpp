#include "chunkode/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace chunkode {
namespace detail {

bool lu_factor_block(double* a, int* piv, int n) {
  // The singularity scale is the max-norm of the block before elimination.
  double scale = 0.0;
  for (int i = 0; i < n * n; ++i) scale = std::max(scale, std::fabs(a[i]));
  const double tiny = 1e-14 * scale;

  for (int c = 0; c < n; ++c) {
    int p = c;
    double best = std::fabs(a[size_t(c) * n + c]);
    for (int r = c + 1; r < n; ++r) {
      const double v = std::fabs(a[size_t(r) * n + c]);
      if (v > best) {
        best = v;
        p = r;
      }
    }
    piv[c] = p;
    if (best < tiny || best == 0.0) return false;
    if (p != c) {
      for (int j = 0; j < n; ++j) std::swap(a[size_t(c) * n + j], a[size_t(p) * n + j]);
    }
    const double inv = 1.0 / a[size_t(c) * n + c];
    for (int r = c + 1; r < n; ++r) {
      const double l = a[size_t(r) * n + c] * inv;
      a[size_t(r) * n + c] = l;
      if (l != 0.0) {
        for (int j = c + 1; j < n; ++j) a[size_t(r) * n + j] -= l * a[size_t(c) * n + j];
      }
    }
  }
  return true;
}

void lu_solve_vec(const double* lu, const int* piv, int n, double* y) {
  for (int i = 0; i < n; ++i) {
    if (piv[i] != i) std::swap(y[i], y[piv[i]]);
  }
  for (int i = 1; i < n; ++i) {
    double s = y[i];
    for (int j = 0; j < i; ++j) s -= lu[size_t(i) * n + j] * y[j];
    y[i] = s;
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (int j = i + 1; j < n; ++j) s -= lu[size_t(i) * n + j] * y[j];
    y[i] = s / lu[size_t(i) * n + i];
  }
}

void lu_right_solve_mat(const double* lu, const int* piv, int n, double* y, int m) {
  // Solves X A = Y row by row: each row w satisfies A^T w_new^T = w^T.
  // With P A = L U this is U^T (L^T (P x)) = w, so substitute through U^T
  // (lower, non-unit), then L^T (upper, unit), then undo the row swaps.
  for (int r = 0; r < m; ++r) {
    double* w = y + size_t(r) * n;
    for (int i = 0; i < n; ++i) {
      double s = w[i];
      for (int j = 0; j < i; ++j) s -= lu[size_t(j) * n + i] * w[j];
      w[i] = s / lu[size_t(i) * n + i];
    }
    for (int i = n - 2; i >= 0; --i) {
      double s = w[i];
      for (int j = i + 1; j < n; ++j) s -= lu[size_t(j) * n + i] * w[j];
      w[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
      if (piv[i] != i) std::swap(w[i], w[piv[i]]);
    }
  }
}

namespace {

void check_system(const BlockBidiagonalSystem& sys, const BatchedChunkVector& rhs) {
  require(sys.n_chunk() >= 1 && sys.n_batch() >= 1 && sys.n_size() >= 1,
          "block bidiagonal system must be non-empty");
  if (sys.n_chunk() > 1) {
    require(sys.offdiag.n_chunk() == sys.n_chunk() - 1 &&
                sys.offdiag.n_batch() == sys.n_batch() &&
                sys.offdiag.n_size() == sys.n_size(),
            "off-diagonal block array must be (n_chunk-1, n_batch, n_size, n_size)");
  }
  require(rhs.n_chunk() == sys.n_chunk() && rhs.n_batch() == sys.n_batch() &&
              rhs.n_size() == sys.n_size(),
          "right-hand side shape must match the system");
}

// y -= M x for one n x n block.
inline void gemv_sub(const double* M, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    const double* row = M + size_t(i) * n;
    for (int j = 0; j < n; ++j) s += row[j] * x[j];
    y[i] -= s;
  }
}

// C = -(A B) for n x n blocks; C must not alias A or B.
inline void gemm_neg(const double* A, const double* B, double* C, int n) {
  for (int i = 0; i < n; ++i) {
    double* crow = C + size_t(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
    const double* arow = A + size_t(i) * n;
    for (int k = 0; k < n; ++k) {
      const double a = arow[k];
      if (a == 0.0) continue;
      const double* brow = B + size_t(k) * n;
      for (int j = 0; j < n; ++j) crow[j] -= a * brow[j];
    }
  }
}

// Descending power-of-two partition sizes covering n rows (7 -> 4, 2, 1).
std::vector<int> partition_sizes(int n) {
  std::vector<int> out;
  for (int bit = 30; bit >= 0; --bit) {
    const int m = 1 << bit;
    if (n & m) out.push_back(m);
  }
  return out;
}

}  // namespace

void factor_inplace(DiagonalFactorization& f) {
  const int nc = f.n_chunk(), nb = f.n_batch(), ns = f.n_size();
  f.piv.resize(size_t(nc) * nb * ns);
  for (int k = 0; k < nc; ++k) {
    for (int b = 0; b < nb; ++b) {
      if (!lu_factor_block(f.block(k, b), f.pivots(k, b), ns)) throw SingularBlock(k, b);
    }
  }
}

void factor_into(const BlockBidiagonalSystem& sys, DiagonalFactorization& f) {
  f.lu = sys.diag;
  factor_inplace(f);
}

void thomas_into(const BlockBidiagonalSystem& sys, const DiagonalFactorization& f,
                 BatchedChunkVector& x) {
  const int nc = x.n_chunk(), nb = x.n_batch(), ns = x.n_size();
  for (int b = 0; b < nb; ++b) lu_solve_vec(f.block(0, b), f.pivots(0, b), ns, x.point(0, b).data());
  for (int k = 1; k < nc; ++k) {
    for (int b = 0; b < nb; ++b) {
      gemv_sub(sys.offdiag.block(k - 1, b), x.point(k - 1, b).data(), x.point(k, b).data(), ns);
      lu_solve_vec(f.block(k, b), f.pivots(k, b), ns, x.point(k, b).data());
    }
  }
}

void thomas_unit_into(const DiagonalFactorization& f, BatchedChunkVector& x) {
  const int nc = x.n_chunk(), nb = x.n_batch(), ns = x.n_size();
  for (int b = 0; b < nb; ++b) lu_solve_vec(f.block(0, b), f.pivots(0, b), ns, x.point(0, b).data());
  for (int k = 1; k < nc; ++k) {
    for (int b = 0; b < nb; ++b) {
      const double* prev = x.point(k - 1, b).data();
      double* cur = x.point(k, b).data();
      for (int i = 0; i < ns; ++i) cur[i] += prev[i];
      lu_solve_vec(f.block(k, b), f.pivots(k, b), ns, cur);
    }
  }
}

void thomas_unit_from(const DiagonalFactorization& f, const BatchedChunkVector& rhs,
                      BatchedChunkVector& x) {
  const int nc = x.n_chunk(), nb = x.n_batch(), ns = x.n_size();
  for (int b = 0; b < nb; ++b) {
    const double* r0 = rhs.point(0, b).data();
    double* x0 = x.point(0, b).data();
    for (int i = 0; i < ns; ++i) x0[i] = r0[i];
    lu_solve_vec(f.block(0, b), f.pivots(0, b), ns, x0);
  }
  for (int k = 1; k < nc; ++k) {
    for (int b = 0; b < nb; ++b) {
      const double* rk = rhs.point(k, b).data();
      const double* prev = x.point(k - 1, b).data();
      double* cur = x.point(k, b).data();
      for (int i = 0; i < ns; ++i) cur[i] = rk[i] + prev[i];
      lu_solve_vec(f.block(k, b), f.pivots(k, b), ns, cur);
    }
  }
}

void strided_solve_into(const DiagonalFactorization& f, BatchedBlockArray& offd,
                        BatchedChunkVector& x, int n_switch, long* sweep_count) {
  const int nc = f.n_chunk(), nb = f.n_batch(), ns = f.n_size();
  std::vector<double> pbuf(size_t(ns) * ns);

  int base = 0;
  for (const int m : partition_sizes(nc)) {
    if (base > 0) {
      // The previous partition is fully solved; fold its last row into this
      // partition's first right-hand side through the original coupling.
      for (int b = 0; b < nb; ++b) {
        gemv_sub(offd.block(base - 1, b), x.point(base - 1, b).data(), x.point(base, b).data(), ns);
      }
    }

    int e = 0;
    while ((1 << e) < m) ++e;
    const int sweeps = (n_switch < 0) ? e : std::min(n_switch, e);

    for (int sidx = 0; sidx < sweeps; ++sidx) {
      const int s = 1 << sidx;
      // Rows read their partner's current values; descending order keeps
      // every read at this sweep's input state, matching the all-at-once
      // update the reduction is defined by.
      for (int r = base + m - 1; r >= base + s; --r) {
        const int q = r - s;
        for (int b = 0; b < nb; ++b) {
          std::memcpy(pbuf.data(), offd.block(r - 1, b), sizeof(double) * ns * ns);
          lu_right_solve_mat(f.block(q, b), f.pivots(q, b), ns, pbuf.data(), ns);
          gemv_sub(pbuf.data(), x.point(q, b).data(), x.point(r, b).data(), ns);
          if (q - base >= s) {
            gemm_neg(pbuf.data(), offd.block(q - 1, b), offd.block(r - 1, b), ns);
          }
          // Otherwise row r decouples here; its stale block is never read
          // again (later sweeps and the finisher only look at rows whose
          // offset inside the partition is at least the current stride).
        }
      }
    }
    if (sweep_count) *sweep_count += sweeps;

    // Finish the independent strided chains by forward substitution. After
    // full reduction every chain is a single row and this collapses to the
    // final block-diagonal solve.
    const int stride = 1 << sweeps;
    for (int c = 0; c < std::min(stride, m); ++c) {
      for (int b = 0; b < nb; ++b) {
        const int r0 = base + c;
        lu_solve_vec(f.block(r0, b), f.pivots(r0, b), ns, x.point(r0, b).data());
        for (int r = r0 + stride; r < base + m; r += stride) {
          gemv_sub(offd.block(r - 1, b), x.point(r - stride, b).data(), x.point(r, b).data(), ns);
          lu_solve_vec(f.block(r, b), f.pivots(r, b), ns, x.point(r, b).data());
        }
      }
    }

    base += m;
  }
}

namespace {

// Stamp -I into every off-diagonal slot of the scratch array, for solves on
// systems whose couplings are known to be unit without reading sys.offdiag.
void fill_minus_identity(BatchedBlockArray& offd, int ns) {
  offd.fill(0.0);
  for (int k = 0; k < offd.n_chunk(); ++k)
    for (int b = 0; b < offd.n_batch(); ++b)
      for (int i = 0; i < ns; ++i) offd(k, b, i, i) = -1.0;
}

}  // namespace

void solve_with_choice(const BlockBidiagonalSystem& sys, const DiagonalFactorization& f,
                       BatchedBlockArray& offdiag_scratch, BatchedChunkVector& x,
                       SolverChoice choice, long* sweep_count) {
  switch (choice.kind) {
    case SolverKind::thomas:
      thomas_into(sys, f, x);
      break;
    case SolverKind::pcr:
      offdiag_scratch = sys.offdiag;
      strided_solve_into(f, offdiag_scratch, x, -1, sweep_count);
      break;
    case SolverKind::hybrid:
      offdiag_scratch = sys.offdiag;
      strided_solve_into(f, offdiag_scratch, x, choice.n_switch, sweep_count);
      break;
  }
}

void solve_unit_offdiag(const DiagonalFactorization& f, BatchedBlockArray& offdiag_scratch,
                        BatchedChunkVector& x, SolverChoice choice, long* sweep_count) {
  switch (choice.kind) {
    case SolverKind::thomas:
      thomas_unit_into(f, x);
      break;
    case SolverKind::pcr:
      fill_minus_identity(offdiag_scratch, x.n_size());
      strided_solve_into(f, offdiag_scratch, x, -1, sweep_count);
      break;
    case SolverKind::hybrid:
      fill_minus_identity(offdiag_scratch, x.n_size());
      strided_solve_into(f, offdiag_scratch, x, choice.n_switch, sweep_count);
      break;
  }
}

}  // namespace detail

DiagonalFactorization factor_diagonal_blocks(const BlockBidiagonalSystem& sys) {
  require(sys.n_chunk() >= 1 && sys.n_batch() >= 1 && sys.n_size() >= 1,
          "block bidiagonal system must be non-empty");
  DiagonalFactorization f;
  detail::factor_into(sys, f);
  return f;
}

BatchedChunkVector solve_thomas(const BlockBidiagonalSystem& sys, const BatchedChunkVector& rhs) {
  detail::check_system(sys, rhs);
  DiagonalFactorization f = factor_diagonal_blocks(sys);
  BatchedChunkVector x = rhs;
  detail::thomas_into(sys, f, x);
  return x;
}

BatchedChunkVector solve_pcr(const BlockBidiagonalSystem& sys, const BatchedChunkVector& rhs,
                             long* sweep_count) {
  detail::check_system(sys, rhs);
  DiagonalFactorization f = factor_diagonal_blocks(sys);
  BatchedBlockArray offd = sys.offdiag;
  BatchedChunkVector x = rhs;
  if (sweep_count) *sweep_count = 0;
  detail::strided_solve_into(f, offd, x, -1, sweep_count);
  return x;
}

BatchedChunkVector solve_hybrid(const BlockBidiagonalSystem& sys, const BatchedChunkVector& rhs,
                                int n_switch, long* sweep_count) {
  detail::check_system(sys, rhs);
  if (n_switch < 0) throw Error("solve_hybrid: n_switch must be >= 0");
  DiagonalFactorization f = factor_diagonal_blocks(sys);
  BatchedBlockArray offd = sys.offdiag;
  BatchedChunkVector x = rhs;
  if (sweep_count) *sweep_count = 0;
  detail::strided_solve_into(f, offd, x, n_switch, sweep_count);
  return x;
}

BatchedChunkVector solve_dense_oracle(const BlockBidiagonalSystem& sys,
                                      const BatchedChunkVector& rhs) {
  detail::check_system(sys, rhs);
  const int nc = sys.n_chunk(), nb = sys.n_batch(), ns = sys.n_size();
  const int dim = nc * ns;
  if (dim > 512) {
    throw SizeGuardExceeded("dense oracle limited to n_chunk * n_size <= 512, got " +
                            std::to_string(dim));
  }

  BatchedChunkVector x(nc, nb, ns);
  Eigen::MatrixXd M(dim, dim);
  Eigen::VectorXd y(dim);
  for (int b = 0; b < nb; ++b) {
    M.setZero();
    for (int k = 0; k < nc; ++k) {
      for (int i = 0; i < ns; ++i) {
        for (int j = 0; j < ns; ++j) {
          M(k * ns + i, k * ns + j) = sys.diag(k, b, i, j);
        }
        if (k > 0) {
          for (int j = 0; j < ns; ++j) {
            M(k * ns + i, (k - 1) * ns + j) = sys.offdiag(k - 1, b, i, j);
          }
        }
        y(k * ns + i) = rhs(k, b, i);
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible()) {
      throw Error("dense oracle: batch lane " + std::to_string(b) + " is singular");
    }
    Eigen::VectorXd sol = lu.solve(y);
    for (int k = 0; k < nc; ++k) {
      for (int i = 0; i < ns; ++i) x(k, b, i) = sol(k * ns + i);
    }
  }
  return x;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(size_t(std::max(n, 0)));
  if (n <= 0) return v;
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * double(i) / double(n - 1);
  v[n - 1] = hi;
  return v;
}

}  // namespace chunkode
