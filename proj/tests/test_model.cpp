#include "chunkode/ode_model.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "chunkode/errors.hpp"
#include "chunkode/integrate.hpp"
#include "chunkode/models.hpp"
#include "doctest.h"

using namespace chunkode;

namespace {

// Local nonlinear model with a hand-written derivative for cross-checking the
// forward-mode and finite-difference paths:
//   h0 = a*y0*y1 + c*sin(t)
//   h1 = b*y0^2 - y1 + c
class QuadModel final : public ModelBase<QuadModel> {
 public:
  explicit QuadModel(int batch_width = 0) : ModelBase({0.7, -0.3, 1.1}, batch_width) {}

  std::string name() const override { return "quad"; }
  int state_size() const override { return 2; }

  template <class T>
  void eval_point(const T& t, std::span<const T> p, std::span<const T> y, std::span<T> out,
                  int) const {
    using std::sin;
    out[0] = p[0] * y[0] * y[1] + p[2] * sin(t);
    out[1] = p[1] * y[0] * y[0] - y[1] + p[2];
  }
};

// Same rate, plus the analytic derivative hooks, to exercise strategy
// selection and the analytic-vs-AD agreement.
class QuadModelAnalytic final : public ModelBase<QuadModelAnalytic> {
 public:
  QuadModelAnalytic() : ModelBase({0.7, -0.3, 1.1}, 0) {}

  std::string name() const override { return "quad_analytic"; }
  int state_size() const override { return 2; }

  template <class T>
  void eval_point(const T& t, std::span<const T> p, std::span<const T> y, std::span<T> out,
                  int) const {
    using std::sin;
    out[0] = p[0] * y[0] * y[1] + p[2] * sin(t);
    out[1] = p[1] * y[0] * y[0] - y[1] + p[2];
  }

  bool has_analytic_jacobian() const override { return true; }
  void jacobian_analytic(const Array2d&, const BatchedChunkVector& y,
                         BatchedBlockArray& out) const override {
    const auto& p = params();
    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) {
        out(k, b, 0, 0) = p[0] * y(k, b, 1);
        out(k, b, 0, 1) = p[0] * y(k, b, 0);
        out(k, b, 1, 0) = 2.0 * p[1] * y(k, b, 0);
        out(k, b, 1, 1) = -1.0;
      }
    }
  }

  bool has_analytic_param_vjp() const override { return true; }
  void param_vjp_analytic(const Array2d& t, const BatchedChunkVector& y,
                          const BatchedChunkVector& w,
                          std::span<double> grad_accum) const override {
    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) {
        grad_accum[0] += w(k, b, 0) * y(k, b, 0) * y(k, b, 1);
        grad_accum[1] += w(k, b, 1) * y(k, b, 0) * y(k, b, 0);
        grad_accum[2] += w(k, b, 0) * std::sin(t(k, b)) + w(k, b, 1);
      }
    }
  }
};

// Rate that goes NaN whenever the first state component is negative. The
// trailing multiply pushes the NaN into the tangent lanes too (the bare
// square root clamps its kink derivative to zero).
class SqrtModel final : public ModelBase<SqrtModel> {
 public:
  SqrtModel() : ModelBase({1.0}, 0) {}
  std::string name() const override { return "sqrt_rate"; }
  int state_size() const override { return 1; }
  template <class T>
  void eval_point(const T&, std::span<const T> p, std::span<const T> y, std::span<T> out,
                  int) const {
    using std::sqrt;
    out[0] = p[0] * sqrt(y[0]) * y[0];
  }
};

void fill_random(BatchedChunkVector& y, unsigned seed, double lo = 0.2, double hi = 1.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (size_t i = 0; i < y.size(); ++i) y.data()[i] = u(rng);
}

void fill_times(Array2d& t, double base) {
  for (int k = 0; k < t.rows(); ++k)
    for (int b = 0; b < t.cols(); ++b) t(k, b) = base + 0.1 * k + 0.01 * b;
}

}  // namespace

TEST_CASE("forward-mode state derivative matches the hand-written one") {
  QuadModel m;
  const int nc = 3, nb = 2, ns = 2;
  Array2d t(nc, nb);
  fill_times(t, 0.3);
  BatchedChunkVector y(nc, nb, ns);
  fill_random(y, 42);

  BatchedBlockArray jac_ad(nc, nb, ns);
  jacobian_state(m, t, y, JacobianStrategy::forward_ad, jac_ad);

  const auto& p = m.params();
  for (int k = 0; k < nc; ++k) {
    for (int b = 0; b < nb; ++b) {
      CHECK(jac_ad(k, b, 0, 0) == doctest::Approx(p[0] * y(k, b, 1)).epsilon(1e-14));
      CHECK(jac_ad(k, b, 0, 1) == doctest::Approx(p[0] * y(k, b, 0)).epsilon(1e-14));
      CHECK(jac_ad(k, b, 1, 0) == doctest::Approx(2.0 * p[1] * y(k, b, 0)).epsilon(1e-14));
      CHECK(jac_ad(k, b, 1, 1) == doctest::Approx(-1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("finite-difference state derivative agrees with forward mode") {
  QuadModel m;
  const int nc = 2, nb = 2, ns = 2;
  Array2d t(nc, nb);
  fill_times(t, 0.1);
  BatchedChunkVector y(nc, nb, ns);
  fill_random(y, 7);

  BatchedBlockArray jac_ad(nc, nb, ns), jac_fd(nc, nb, ns);
  jacobian_state(m, t, y, JacobianStrategy::forward_ad, jac_ad);
  jacobian_state(m, t, y, JacobianStrategy::finite_difference, jac_fd);
  for (size_t i = 0; i < jac_ad.size(); ++i) {
    CHECK(jac_fd.data()[i] == doctest::Approx(jac_ad.data()[i]).epsilon(1e-5));
  }
}

TEST_CASE("analytic and forward-mode derivatives of the same rate coincide") {
  QuadModelAnalytic m;
  const int nc = 4, nb = 3, ns = 2;
  Array2d t(nc, nb);
  fill_times(t, 0.5);
  BatchedChunkVector y(nc, nb, ns);
  fill_random(y, 99);

  BatchedBlockArray ja(nc, nb, ns), jf(nc, nb, ns);
  jacobian_state(m, t, y, JacobianStrategy::analytic, ja);
  jacobian_state(m, t, y, JacobianStrategy::forward_ad, jf);
  for (size_t i = 0; i < ja.size(); ++i) {
    CHECK(ja.data()[i] == doctest::Approx(jf.data()[i]).epsilon(1e-13));
  }
}

TEST_CASE("requesting an analytic derivative the model lacks throws") {
  QuadModel m;  // forward-mode only
  Array2d t(1, 1);
  t(0, 0) = 0.0;
  BatchedChunkVector y(1, 1, 2);
  y.fill(0.5);
  BatchedBlockArray out(1, 1, 2);
  CHECK_THROWS_AS(jacobian_state(m, t, y, JacobianStrategy::analytic, out), StrategyUnavailable);
}

TEST_CASE("preferred strategy reflects what the model implements") {
  CHECK(preferred_jacobian_strategy(QuadModelAnalytic{}) == JacobianStrategy::analytic);
  CHECK(preferred_jacobian_strategy(QuadModel{}) == JacobianStrategy::forward_ad);
}

TEST_CASE("parameter products agree across analytic, forward-mode and differences") {
  QuadModelAnalytic ma;
  QuadModel mf;
  const int nc = 3, nb = 2, ns = 2;
  Array2d t(nc, nb);
  fill_times(t, 0.2);
  BatchedChunkVector y(nc, nb, ns), w(nc, nb, ns);
  fill_random(y, 5);
  fill_random(w, 6, -1.0, 1.0);

  std::vector<double> ga(3, 0.0), gf(3, 0.0);
  parameter_vjp(ma, t, y, w, ga);  // analytic path
  parameter_vjp(mf, t, y, w, gf);  // forward-mode path
  for (int j = 0; j < 3; ++j) CHECK(ga[j] == doctest::Approx(gf[j]).epsilon(1e-12));

  // direct forward-mode entry point on the analytic model matches too
  std::vector<double> gd(3, 0.0);
  ma.param_vjp_forward_ad(t, y, w, gd);
  for (int j = 0; j < 3; ++j) CHECK(ga[j] == doctest::Approx(gd[j]).epsilon(1e-12));
}

TEST_CASE("bundled hardening model's analytic parameter product matches forward mode") {
  auto m = build_chaboche(3, 2);
  REQUIRE(m->has_analytic_param_vjp());
  const int nc = 4, nb = 2, ns = m->state_size();
  Array2d t(nc, nb);
  fill_times(t, 0.0);
  BatchedChunkVector y(nc, nb, ns), w(nc, nb, ns);
  // mix elastic and plastic regimes: positive and negative stresses, some big
  fill_random(y, 17, -2.0, 2.0);
  fill_random(w, 18, -1.0, 1.0);

  const size_t np = m->params().size();
  std::vector<double> ga(np, 0.0), gf(np, 0.0);
  m->param_vjp_analytic(t, y, w, ga);
  m->param_vjp_forward_ad(t, y, w, gf);
  for (size_t j = 0; j < np; ++j) {
    CHECK(ga[j] == doctest::Approx(gf[j]).epsilon(1e-12).scale(1.0 + std::fabs(gf[j])));
  }
}

TEST_CASE("non-finite rates surface as typed errors") {
  SqrtModel m;

  SUBCASE("through the chunk residual") {
    Array2d y_start(1, 1);
    y_start(0, 0) = -1.0;  // sqrt(-1) = NaN
    BatchedChunkVector dy(1, 1, 1);
    dy.fill(0.0);
    Array2d t(1, 1), dt(1, 1);
    t(0, 0) = 0.1;
    dt(0, 0) = 0.1;
    BatchedChunkVector out(1, 1, 1);
    CHECK_THROWS_AS(chunk_residual(m, y_start, dy, t, dt, out), NonFiniteOutput);
  }

  SUBCASE("through the derivative scan") {
    Array2d t(1, 1);
    t(0, 0) = 0.0;
    BatchedChunkVector y(1, 1, 1);
    y.fill(-1.0);
    BatchedBlockArray out(1, 1, 1);
    CHECK_THROWS_AS(jacobian_state(m, t, y, JacobianStrategy::forward_ad, out), NonFiniteOutput);
    CHECK_THROWS_AS(jacobian_state(m, t, y, JacobianStrategy::finite_difference, out),
                    NonFiniteOutput);
  }
}

TEST_CASE("parameter updates produce a new immutable instance") {
  QuadModel m;
  const std::vector<double> before = m.params();

  const std::vector<double> fresh{2.0, 3.0, 4.0};
  auto m2 = m.with_params(fresh);
  CHECK(m2->params() == fresh);
  CHECK(m.params() == before);  // original untouched
  CHECK(m2->state_size() == m.state_size());
  CHECK(m2->name() == m.name());

  const std::vector<double> wrong{1.0, 2.0};
  CHECK_THROWS_AS(m.with_params(wrong), ShapeMismatch);
}

TEST_CASE("shape checking rejects mismatched evaluation grids") {
  QuadModel m;
  Array2d t(2, 2);
  fill_times(t, 0.0);
  BatchedChunkVector y(2, 2, 2), out_ok(2, 2, 2);
  y.fill(0.5);

  BatchedChunkVector out_bad_size(2, 2, 3);
  CHECK_THROWS_AS(m.rate(t, y, out_bad_size), ShapeMismatch);

  BatchedChunkVector y_bad_state(2, 2, 3), out3(2, 2, 3);
  CHECK_THROWS_AS(m.rate(t, y_bad_state, out3), ShapeMismatch);

  Array2d t_bad(3, 2);
  fill_times(t_bad, 0.0);
  CHECK_THROWS_AS(m.rate(t_bad, y, out_ok), ShapeMismatch);

  m.rate(t, y, out_ok);  // well-shaped call passes
  for (size_t i = 0; i < out_ok.size(); ++i) CHECK(std::isfinite(out_ok.data()[i]));
}

TEST_CASE("a model bound to a batch width rejects other widths") {
  QuadModel bound(2);
  CHECK(bound.n_batch() == 2);
  Array2d t3(1, 3);
  fill_times(t3, 0.0);
  BatchedChunkVector y3(1, 3, 2), out3(1, 3, 2);
  y3.fill(0.5);
  CHECK_THROWS_AS(bound.rate(t3, y3, out3), ShapeMismatch);

  Array2d t2(1, 2);
  fill_times(t2, 0.0);
  BatchedChunkVector y2(1, 2, 2), out2(1, 2, 2);
  y2.fill(0.5);
  bound.rate(t2, y2, out2);  // matching width is fine
  CHECK(out2(0, 0, 1) == doctest::Approx(out2(0, 1, 1)).epsilon(1e-15));
}
