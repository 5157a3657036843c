#include <cstdint>
#include <numbers>
#include <random>

#include "chunkode/models.hpp"

namespace chunkode {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// dy/dt = tanh(W3 tanh(W2 tanh(W1 [y; f(t)] + b1) + b2) + b3) with layer
// widths (n+1 -> n+1), (n+1 -> n+1), (n+1 -> n). The parameter vector is
// every weight and bias:
//   [W1 row-major (n+1)x(n+1), b1, W2 row-major, b2, W3 row-major n x (n+1), b3]
// Weights and biases are drawn once at build time from the uniform range
// [-sqrt(1/(n+1)), +sqrt(1/(n+1))] using mt19937_64 in exactly this order,
// each 64-bit draw mapped to [0, 1) by (x >> 11) * 2^-53, then frozen.
// The forcing amplitude and per-batch periods are fixed constants, not
// differentiable parameters.
class NeuralOde final : public ModelBase<NeuralOde> {
 public:
  NeuralOde(int n_unit, int n_batch, unsigned long long seed)
      : ModelBase(make_params(n_unit, seed), n_batch),
        n_(n_unit),
        f_a_(1.0),
        periods_(linspace(1e-2, 1.0, n_batch)) {}

  std::string name() const override { return "node"; }
  int state_size() const override { return n_; }
  double default_t_max() const override { return 1.0; }

  bool has_analytic_jacobian() const override { return true; }
  bool has_analytic_param_vjp() const override { return true; }

  template <class T>
  void eval_point(const T& t, std::span<const T> p, std::span<const T> y, std::span<T> out,
                  int b) const {
    const int n = n_, w = n + 1;
    const T* W1 = p.data();
    const T* b1 = p.data() + w * w;
    const T* W2 = b1 + w;
    const T* b2 = W2 + w * w;
    const T* W3 = b2 + w;
    const T* b3 = W3 + n * w;

    std::vector<T> z0(w), z1(w), z2(w);
    for (int i = 0; i < n; ++i) z0[i] = y[i];
    z0[n] = f_a_ * sin(kTwoPi * t / periods_[b]);

    for (int i = 0; i < w; ++i) {
      T acc = b1[i];
      for (int j = 0; j < w; ++j) acc += W1[i * w + j] * z0[j];
      z1[i] = tanh(acc);
    }
    for (int i = 0; i < w; ++i) {
      T acc = b2[i];
      for (int j = 0; j < w; ++j) acc += W2[i * w + j] * z1[j];
      z2[i] = tanh(acc);
    }
    for (int i = 0; i < n; ++i) {
      T acc = b3[i];
      for (int j = 0; j < w; ++j) acc += W3[i * w + j] * z2[j];
      out[i] = tanh(acc);
    }
  }

  void jacobian_analytic(const Array2d& t, const BatchedChunkVector& y,
                         BatchedBlockArray& out) const override {
    detail::check_rate_shapes(*this, t, y, y);
    const int n = n_, w = n + 1;
    const double* W1 = params_.data();
    const double* W2 = params_.data() + w * w + w;
    const double* W3 = W2 + w * w + w;

    std::vector<double> z0(w), z1(w), z2(w), o(n);
    // layer-to-layer products: M1 = diag(1-z1^2) W1[:, :n], then M2 = ...
    std::vector<double> M1(size_t(w) * n), M2(size_t(w) * n);

    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) {
        forward(t(k, b), y.point(k, b), b, z0, z1, z2, o);

        for (int i = 0; i < w; ++i) {
          const double g = 1.0 - z1[i] * z1[i];
          for (int j = 0; j < n; ++j) M1[size_t(i) * n + j] = g * W1[i * w + j];
        }
        for (int i = 0; i < w; ++i) {
          const double g = 1.0 - z2[i] * z2[i];
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int l = 0; l < w; ++l) acc += W2[i * w + l] * M1[size_t(l) * n + j];
            M2[size_t(i) * n + j] = g * acc;
          }
        }
        for (int i = 0; i < n; ++i) {
          const double g = 1.0 - o[i] * o[i];
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int l = 0; l < w; ++l) acc += W3[i * w + l] * M2[size_t(l) * n + j];
            out(k, b, i, j) = g * acc;
          }
        }
      }
    }
  }

  void param_vjp_analytic(const Array2d& t, const BatchedChunkVector& y,
                          const BatchedChunkVector& wgt,
                          std::span<double> grad) const override {
    detail::check_rate_shapes(*this, t, y, y);
    const int n = n_, w = n + 1;
    const double* W2 = params_.data() + w * w + w;
    const double* W3 = W2 + w * w + w;
    const size_t ob1 = size_t(w) * w, oW2 = ob1 + w, ob2 = oW2 + size_t(w) * w;
    const size_t oW3 = ob2 + w, ob3 = oW3 + size_t(n) * w;

    std::vector<double> z0(w), z1(w), z2(w), o(n), d3(n), d2(w), d1(w);

    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) {
        forward(t(k, b), y.point(k, b), b, z0, z1, z2, o);

        for (int i = 0; i < n; ++i) d3[i] = wgt(k, b, i) * (1.0 - o[i] * o[i]);
        for (int i = 0; i < w; ++i) {
          double acc = 0.0;
          for (int l = 0; l < n; ++l) acc += W3[l * w + i] * d3[l];
          d2[i] = acc * (1.0 - z2[i] * z2[i]);
        }
        for (int i = 0; i < w; ++i) {
          double acc = 0.0;
          for (int l = 0; l < w; ++l) acc += W2[l * w + i] * d2[l];
          d1[i] = acc * (1.0 - z1[i] * z1[i]);
        }

        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < w; ++j) grad[oW3 + size_t(i) * w + j] += d3[i] * z2[j];
          grad[ob3 + i] += d3[i];
        }
        for (int i = 0; i < w; ++i) {
          for (int j = 0; j < w; ++j) grad[oW2 + size_t(i) * w + j] += d2[i] * z1[j];
          grad[ob2 + i] += d2[i];
        }
        for (int i = 0; i < w; ++i) {
          for (int j = 0; j < w; ++j) grad[size_t(i) * w + j] += d1[i] * z0[j];
          grad[ob1 + i] += d1[i];
        }
      }
    }
  }

 private:
  void forward(double t, std::span<const double> y, int b, std::vector<double>& z0,
               std::vector<double>& z1, std::vector<double>& z2, std::vector<double>& o) const {
    const int n = n_, w = n + 1;
    const double* W1 = params_.data();
    const double* b1 = params_.data() + w * w;
    const double* W2 = b1 + w;
    const double* b2 = W2 + w * w;
    const double* W3 = b2 + w;
    const double* b3 = W3 + n * w;

    for (int i = 0; i < n; ++i) z0[i] = y[i];
    z0[n] = f_a_ * std::sin(kTwoPi * t / periods_[b]);
    for (int i = 0; i < w; ++i) {
      double acc = b1[i];
      for (int j = 0; j < w; ++j) acc += W1[i * w + j] * z0[j];
      z1[i] = std::tanh(acc);
    }
    for (int i = 0; i < w; ++i) {
      double acc = b2[i];
      for (int j = 0; j < w; ++j) acc += W2[i * w + j] * z1[j];
      z2[i] = std::tanh(acc);
    }
    for (int i = 0; i < n; ++i) {
      double acc = b3[i];
      for (int j = 0; j < w; ++j) acc += W3[i * w + j] * z2[j];
      o[i] = std::tanh(acc);
    }
  }

  static std::vector<double> make_params(int n_unit, unsigned long long seed) {
    const int n = n_unit, w = n + 1;
    const double half = std::sqrt(1.0 / double(w));
    std::mt19937_64 gen(seed);
    auto draw = [&]() {
      const double u = double(gen() >> 11) * 0x1.0p-53;  // uniform in [0, 1)
      return -half + 2.0 * half * u;
    };
    std::vector<double> p;
    p.reserve(2 * size_t(w) * w + 2 * w + size_t(n) * w + n);
    for (int i = 0; i < w * w; ++i) p.push_back(draw());  // W1
    for (int i = 0; i < w; ++i) p.push_back(draw());      // b1
    for (int i = 0; i < w * w; ++i) p.push_back(draw());  // W2
    for (int i = 0; i < w; ++i) p.push_back(draw());      // b2
    for (int i = 0; i < n * w; ++i) p.push_back(draw());  // W3
    for (int i = 0; i < n; ++i) p.push_back(draw());      // b3
    return p;
  }

  int n_;
  double f_a_;
  std::vector<double> periods_;
};

}  // namespace

std::unique_ptr<OdeModel> build_neural_ode(int n_unit, int n_batch, unsigned long long seed) {
  require(n_unit >= 1 && n_batch >= 1, "build_neural_ode: n_unit, n_batch >= 1");
  return std::make_unique<NeuralOde>(n_unit, n_batch, seed);
}

}  // namespace chunkode
