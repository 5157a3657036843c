#include "chunkode/linalg.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "chunkode/verify.hpp"
#include "doctest.h"

using namespace chunkode;

namespace {

// Assemble one batch lane of a lower block-bidiagonal system as a dense
// Eigen matrix: diagonal blocks A_k, sub-diagonal blocks B_k.
Eigen::MatrixXd dense_lane(const BlockBidiagonalSystem& sys, int b) {
  const int c = sys.n_chunk(), ns = sys.n_size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(c * ns, c * ns);
  for (int k = 0; k < c; ++k)
    for (int r = 0; r < ns; ++r)
      for (int q = 0; q < ns; ++q) m(k * ns + r, k * ns + q) = sys.diag(k, b, r, q);
  for (int k = 0; k + 1 < c; ++k)
    for (int r = 0; r < ns; ++r)
      for (int q = 0; q < ns; ++q) m((k + 1) * ns + r, k * ns + q) = sys.offdiag(k, b, r, q);
  return m;
}

Eigen::VectorXd dense_rhs(const BatchedChunkVector& rhs, int b) {
  const int c = rhs.n_chunk(), ns = rhs.n_size();
  Eigen::VectorXd v(c * ns);
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < ns; ++i) v(k * ns + i) = rhs(k, b, i);
  return v;
}

double max_rel_err(const BatchedChunkVector& got, const BlockBidiagonalSystem& sys,
                   const BatchedChunkVector& rhs) {
  double worst = 0.0;
  for (int b = 0; b < sys.n_batch(); ++b) {
    const Eigen::VectorXd x_ref = Eigen::PartialPivLU<Eigen::MatrixXd>(dense_lane(sys, b))
                                      .solve(dense_rhs(rhs, b));
    const Eigen::VectorXd x_got = dense_rhs(got, b);
    const double scale = std::max(x_ref.lpNorm<Eigen::Infinity>(), 1e-30);
    worst = std::max(worst, (x_got - x_ref).lpNorm<Eigen::Infinity>() / scale);
  }
  return worst;
}

// Expected reduction sweeps: a partition of size 2^e costs e sweeps, and a
// chunk count decomposes into descending power-of-two partitions.
long expected_pcr_sweeps(int n_chunk) {
  long total = 0;
  for (int e = 30; e >= 0; --e) {
    if (n_chunk & (1 << e)) total += e;
  }
  return total;
}

long expected_hybrid_sweeps(int n_chunk, int n_switch) {
  long total = 0;
  for (int e = 30; e >= 0; --e) {
    if (n_chunk & (1 << e)) total += std::min(e, n_switch);
  }
  return total;
}

}  // namespace

TEST_CASE("block LU factor and solve match an unrelated dense library") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n : {1, 2, 3, 4, 5, 6}) {
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = u(rng) + (i == j ? 3.0 : 0.0);
    }
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = u(rng);

    std::vector<double> lu(a.data(), a.data() + n * n);
    // Eigen stores column-major; the kernels expect row-major
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) lu[size_t(i) * n + j] = a(i, j);
    std::vector<int> piv(n);
    REQUIRE(detail::lu_factor_block(lu.data(), piv.data(), n));

    std::vector<double> x(y.data(), y.data() + n);
    detail::lu_solve_vec(lu.data(), piv.data(), n, x.data());
    const Eigen::VectorXd x_ref = a.partialPivLu().solve(y);
    for (int i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(x_ref(i)).epsilon(1e-12));
  }
}

TEST_CASE("right solve computes X A = Y for stacked row vectors") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 4, m = 3;
  std::vector<double> a(n * n), y(m * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a[size_t(i) * n + j] = u(rng) + (i == j ? 3.0 : 0.0);
  for (auto& v : y) v = u(rng);

  std::vector<double> lu = a;
  std::vector<int> piv(n);
  REQUIRE(detail::lu_factor_block(lu.data(), piv.data(), n));
  std::vector<double> x = y;
  detail::lu_right_solve_mat(lu.data(), piv.data(), n, x.data(), m);

  // check X A == Y row by row
  for (int r = 0; r < m; ++r) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += x[size_t(r) * n + i] * a[size_t(i) * n + j];
      CHECK(s == doctest::Approx(y[size_t(r) * n + j]).epsilon(1e-11));
    }
  }
}

TEST_CASE("factoring a singular diagonal block reports its chunk and batch") {
  BlockBidiagonalSystem sys = make_random_system(4, 2, 3, 21);
  for (int r = 0; r < 3; ++r)
    for (int q = 0; q < 3; ++q) sys.diag(2, 1, r, q) = 0.0;
  try {
    factor_diagonal_blocks(sys);
    FAIL("expected SingularBlock");
  } catch (const SingularBlock& e) {
    CHECK(e.chunk_index == 2);
    CHECK(e.batch_index == 1);
  }
}

TEST_CASE("all solvers agree with a dense reference across shapes") {
  unsigned long long seed = 100;
  for (int nc : {1, 2, 3, 5, 8, 13, 16, 31, 32, 33}) {
    for (int ns : {1, 3, 5}) {
      for (int nb : {1, 3}) {
        const auto sys = make_random_system(nc, nb, ns, seed);
        const auto rhs = make_random_rhs(nc, nb, ns, seed + 1);
        seed += 2;
        CHECK(max_rel_err(solve_thomas(sys, rhs), sys, rhs) <= 1e-10);
        CHECK(max_rel_err(solve_pcr(sys, rhs), sys, rhs) <= 1e-10);
        CHECK(max_rel_err(solve_hybrid(sys, rhs, 0), sys, rhs) <= 1e-10);
        CHECK(max_rel_err(solve_hybrid(sys, rhs, 2), sys, rhs) <= 1e-10);
        CHECK(max_rel_err(solve_hybrid(sys, rhs, 30), sys, rhs) <= 1e-10);
        CHECK(max_rel_err(solve_dense_oracle(sys, rhs), sys, rhs) <= 1e-10);
      }
    }
  }
}

TEST_CASE("reduction solvers reproduce the forward substitution exactly enough") {
  // pairwise agreement between the library's own solvers, no external oracle
  for (int nc : {6, 7, 12, 33}) {
    const auto sys = make_random_system(nc, 2, 4, 7000 + nc);
    const auto rhs = make_random_rhs(nc, 2, 4, 7100 + nc);
    const auto xt = solve_thomas(sys, rhs);
    const auto xp = solve_pcr(sys, rhs);
    const auto xh = solve_hybrid(sys, rhs, 1);
    double worst = 0.0, scale = 0.0;
    for (size_t i = 0; i < xt.size(); ++i) {
      worst = std::max(worst, std::fabs(xt.data()[i] - xp.data()[i]));
      worst = std::max(worst, std::fabs(xt.data()[i] - xh.data()[i]));
      scale = std::max(scale, std::fabs(xt.data()[i]));
    }
    CHECK(worst <= 1e-9 * std::max(scale, 1.0));
  }
}

TEST_CASE("reduction sweep counts follow the power-of-two partitioning") {
  for (int nc = 1; nc <= 33; ++nc) {
    const auto sys = make_random_system(nc, 1, 2, 500 + nc);
    const auto rhs = make_random_rhs(nc, 1, 2, 600 + nc);
    long sweeps = -1;
    solve_pcr(sys, rhs, &sweeps);
    CHECK(sweeps == expected_pcr_sweeps(nc));
    for (int n_switch : {0, 1, 3}) {
      long hs = -1;
      solve_hybrid(sys, rhs, n_switch, &hs);
      CHECK(hs == expected_hybrid_sweeps(nc, n_switch));
    }
  }
}

TEST_CASE("unit-coupling kernels match the general path when couplings are -I") {
  for (int nc : {1, 2, 5, 16, 33}) {
    const int nb = 2, ns = 4;
    BlockBidiagonalSystem sys = make_random_system(nc, nb, ns, 900 + nc);
    if (nc > 1) {
      sys.offdiag.fill(0.0);
      for (int k = 0; k + 1 < nc; ++k)
        for (int b = 0; b < nb; ++b)
          for (int i = 0; i < ns; ++i) sys.offdiag(k, b, i, i) = -1.0;
    }
    const auto rhs = make_random_rhs(nc, nb, ns, 950 + nc);
    const auto x_general = solve_thomas(sys, rhs);

    const auto fac = factor_diagonal_blocks(sys);

    BatchedChunkVector x1 = rhs;
    detail::thomas_unit_into(fac, x1);
    BatchedChunkVector x2(nc, nb, ns);
    detail::thomas_unit_from(fac, rhs, x2);
    for (size_t i = 0; i < x_general.size(); ++i) {
      CHECK(x1.data()[i] == doctest::Approx(x_general.data()[i]).epsilon(1e-13));
      CHECK(x2.data()[i] == doctest::Approx(x_general.data()[i]).epsilon(1e-13));
    }

    BatchedBlockArray scratch(nc > 1 ? nc - 1 : 0, nb, ns);
    for (SolverKind kind : {SolverKind::thomas, SolverKind::pcr, SolverKind::hybrid}) {
      BatchedChunkVector x3 = rhs;
      long sweeps = 0;
      detail::solve_unit_offdiag(fac, scratch, x3, SolverChoice{kind, 1}, &sweeps);
      for (size_t i = 0; i < x_general.size(); ++i) {
        CHECK(x3.data()[i] ==
              doctest::Approx(x_general.data()[i]).epsilon(1e-10).scale(
                  std::max(1.0, std::fabs(x_general.data()[i]))));
      }
    }
  }
}

TEST_CASE("dense reference refuses oversized systems") {
  BlockBidiagonalSystem sys(513, 1, 1);
  for (int k = 0; k < 513; ++k) sys.diag(k, 0, 0, 0) = 2.0;
  BatchedChunkVector rhs(513, 1, 1);
  rhs.fill(1.0);
  CHECK_THROWS_AS(solve_dense_oracle(sys, rhs), SizeGuardExceeded);
}

TEST_CASE("solvers reject mismatched right-hand sides") {
  const auto sys = make_random_system(4, 2, 3, 31);
  BatchedChunkVector wrong_chunks(3, 2, 3), wrong_batch(4, 1, 3), wrong_size(4, 2, 2);
  CHECK_THROWS_AS(solve_thomas(sys, wrong_chunks), ShapeMismatch);
  CHECK_THROWS_AS(solve_pcr(sys, wrong_batch), ShapeMismatch);
  CHECK_THROWS_AS(solve_hybrid(sys, wrong_size, 1), ShapeMismatch);
  CHECK_THROWS_AS(solve_dense_oracle(sys, wrong_chunks), ShapeMismatch);
}

TEST_CASE("linspace covers endpoints and the single-point edge") {
  const auto v = linspace(1.0, 3.0, 5);
  REQUIRE(v.size() == 5);
  CHECK(v.front() == 1.0);
  CHECK(v.back() == 3.0);
  CHECK(v[2] == doctest::Approx(2.0).epsilon(1e-15));
  const auto one = linspace(4.5, 9.0, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 4.5);
  const auto two = linspace(-1.0, 1.0, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == -1.0);
  CHECK(two[1] == 1.0);
}
