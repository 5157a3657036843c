#include "chunkode/models.hpp"

namespace chunkode {

namespace {

// dy/dt = -p y. The backward Euler update has the closed form
// y_{i+1} = y_i / (1 + p dt), which pins the integrator exactly.
class ScalarDecay final : public ModelBase<ScalarDecay> {
 public:
  explicit ScalarDecay(double p0) : ModelBase({p0}, 0) {}

  std::string name() const override { return "scalar_decay"; }
  int state_size() const override { return 1; }

  template <class T>
  void eval_point(const T&, std::span<const T> p, std::span<const T> y, std::span<T> out,
                  int) const {
    out[0] = -p[0] * y[0];
  }

  bool has_analytic_jacobian() const override { return true; }
  void jacobian_analytic(const Array2d& t, const BatchedChunkVector& y,
                         BatchedBlockArray& out) const override {
    detail::check_rate_shapes(*this, t, y, y);
    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) out(k, b, 0, 0) = -params_[0];
    }
  }
};

// dy/dt = p. With loss L = y_N the exact gradient is the total time span,
// which pins the gradient quadrature weights.
class ConstantRate final : public ModelBase<ConstantRate> {
 public:
  explicit ConstantRate(double c0) : ModelBase({c0}, 0) {}

  std::string name() const override { return "constant_rate"; }
  int state_size() const override { return 1; }

  template <class T>
  void eval_point(const T&, std::span<const T> p, std::span<const T>, std::span<T> out,
                  int) const {
    out[0] = p[0];
  }

  bool has_analytic_jacobian() const override { return true; }
  void jacobian_analytic(const Array2d& t, const BatchedChunkVector& y,
                         BatchedBlockArray& out) const override {
    detail::check_rate_shapes(*this, t, y, y);
    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) out(k, b, 0, 0) = 0.0;
    }
  }
};

}  // namespace

std::unique_ptr<OdeModel> build_scalar_decay(double p0) {
  return std::make_unique<ScalarDecay>(p0);
}

std::unique_ptr<OdeModel> build_constant_rate(double c0) {
  return std::make_unique<ConstantRate>(c0);
}

std::unique_ptr<OdeModel> build_problem(const std::string& key, int n_unit, int n_batch,
                                        unsigned long long seed) {
  if (key == "mds") return build_mass_damper_spring(n_unit, n_batch);
  if (key == "neuron") return build_neuron(n_unit, n_batch);
  if (key == "chaboche") return build_chaboche(n_unit, n_batch);
  if (key == "node") return build_neural_ode(n_unit, n_batch, seed);
  throw Error("unknown problem '" + key + "' (expected mds, neuron, chaboche, or node)");
}

}  // namespace chunkode
