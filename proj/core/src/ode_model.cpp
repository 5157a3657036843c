#include "chunkode/ode_model.hpp"

#include <cmath>

namespace chunkode {

namespace detail {

void check_rate_shapes(const OdeModel& m, const Array2d& t, const BatchedChunkVector& y,
                       const BatchedChunkVector& out) {
  require(y.n_size() == m.state_size(), "state width must match the model");
  require(y.same_shape(out), "rate output shape must match the state array");
  require(t.rows() == y.n_chunk() && t.cols() == y.n_batch(),
          "time array must be (n_chunk, n_batch)");
  if (m.n_batch() > 0) {
    require(y.n_batch() == m.n_batch(), "batch width must match the model's parameterization");
  }
}

}  // namespace detail

void OdeModel::jacobian_analytic(const Array2d&, const BatchedChunkVector&,
                                 BatchedBlockArray&) const {
  throw StrategyUnavailable("model '" + name() + "' has no analytic Jacobian");
}

void OdeModel::jacobian_forward_ad(const Array2d&, const BatchedChunkVector&,
                                   BatchedBlockArray&) const {
  throw StrategyUnavailable("model '" + name() + "' has no forward-mode path");
}

void OdeModel::param_vjp_forward_ad(const Array2d&, const BatchedChunkVector&,
                                    const BatchedChunkVector&, std::span<double>) const {
  throw StrategyUnavailable("model '" + name() + "' has no forward-mode path");
}

void OdeModel::param_vjp_analytic(const Array2d&, const BatchedChunkVector&,
                                  const BatchedChunkVector&, std::span<double>) const {
  throw StrategyUnavailable("model '" + name() + "' has no analytic parameter product");
}

namespace {

void jacobian_finite_difference(const OdeModel& m, const Array2d& t, const BatchedChunkVector& y,
                                BatchedBlockArray& out) {
  const int nc = y.n_chunk(), nb = y.n_batch(), n = y.n_size();
  BatchedChunkVector yp = y, ym = y, rp(nc, nb, n), rm(nc, nb, n);
  Array2d delta(nc, nb);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < nc; ++k) {
      for (int b = 0; b < nb; ++b) {
        const double d = 1e-6 * (1.0 + std::fabs(y(k, b, j)));
        delta(k, b) = d;
        yp(k, b, j) = y(k, b, j) + d;
        ym(k, b, j) = y(k, b, j) - d;
      }
    }
    m.rate(t, yp, rp);
    m.rate(t, ym, rm);
    for (int k = 0; k < nc; ++k) {
      for (int b = 0; b < nb; ++b) {
        const double inv = 1.0 / (2.0 * delta(k, b));
        for (int i = 0; i < n; ++i) out(k, b, i, j) = (rp(k, b, i) - rm(k, b, i)) * inv;
        yp(k, b, j) = y(k, b, j);
        ym(k, b, j) = y(k, b, j);
      }
    }
  }
}

void param_vjp_finite_difference(const OdeModel& m, const Array2d& t, const BatchedChunkVector& y,
                                 const BatchedChunkVector& w, std::span<double> grad_accum) {
  const std::vector<double>& p = m.params();
  const int nc = y.n_chunk(), nb = y.n_batch(), n = y.n_size();
  BatchedChunkVector rp(nc, nb, n), rm(nc, nb, n);
  std::vector<double> pert(p);
  for (size_t j = 0; j < p.size(); ++j) {
    const double d = 1e-6 * (1.0 + std::fabs(p[j]));
    pert[j] = p[j] + d;
    m.with_params(pert)->rate(t, y, rp);
    pert[j] = p[j] - d;
    m.with_params(pert)->rate(t, y, rm);
    pert[j] = p[j];
    double s = 0.0;
    for (int k = 0; k < nc; ++k) {
      for (int b = 0; b < nb; ++b) {
        for (int i = 0; i < n; ++i) s += w(k, b, i) * (rp(k, b, i) - rm(k, b, i));
      }
    }
    grad_accum[j] += s / (2.0 * d);
  }
}

}  // namespace

namespace detail {

void jacobian_state_unscanned(const OdeModel& model, const Array2d& t,
                              const BatchedChunkVector& y, JacobianStrategy strategy,
                              BatchedBlockArray& out) {
  require(out.n_chunk() == y.n_chunk() && out.n_batch() == y.n_batch() &&
              out.n_size() == y.n_size(),
          "Jacobian block array shape must match the state array");
  check_rate_shapes(model, t, y, y);

  switch (strategy) {
    case JacobianStrategy::analytic:
      if (!model.has_analytic_jacobian()) {
        throw StrategyUnavailable("model '" + model.name() + "' has no analytic Jacobian");
      }
      model.jacobian_analytic(t, y, out);
      break;
    case JacobianStrategy::forward_ad:
      if (!model.has_forward_ad()) {
        throw StrategyUnavailable("model '" + model.name() + "' has no forward-mode path");
      }
      model.jacobian_forward_ad(t, y, out);
      break;
    case JacobianStrategy::finite_difference:
      jacobian_finite_difference(model, t, y, out);
      break;
  }
}

}  // namespace detail

void jacobian_state(const OdeModel& model, const Array2d& t, const BatchedChunkVector& y,
                    JacobianStrategy strategy, BatchedBlockArray& out) {
  detail::jacobian_state_unscanned(model, t, y, strategy, out);
  if (!all_finite({out.data(), out.size()})) {
    throw NonFiniteOutput("Jacobian of model '" + model.name() + "' is not finite");
  }
}

void parameter_vjp(const OdeModel& model, const Array2d& t, const BatchedChunkVector& y,
                   const BatchedChunkVector& w, std::span<double> grad_accum) {
  require(w.same_shape(y), "weight array shape must match the state array");
  require(grad_accum.size() == model.params().size(),
          "gradient accumulator length must match the parameter count");
  detail::check_rate_shapes(model, t, y, y);

  if (model.has_analytic_param_vjp()) {
    model.param_vjp_analytic(t, y, w, grad_accum);
  } else if (model.has_forward_ad()) {
    model.param_vjp_forward_ad(t, y, w, grad_accum);
  } else {
    param_vjp_finite_difference(model, t, y, w, grad_accum);
  }

  if (!all_finite({grad_accum.data(), grad_accum.size()})) {
    throw NonFiniteOutput("parameter product of model '" + model.name() + "' is not finite");
  }
}

}  // namespace chunkode
