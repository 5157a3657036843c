#include <numbers>

#include "chunkode/models.hpp"

namespace chunkode {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Serial chain: element i couples to element i-1 through its own spring K_i
// and damper C_i, and to element i+1 through K_{i+1}, C_{i+1}. Element 1 has
// a free forced end (no coupling below), element n_unit sits at the pinned
// end whose coupling coefficients are absent. Parameter vector layout:
//   [K_1..K_n, C_1..C_n, M_1..M_n, f_a, T_1..T_{n_batch}]
class MassDamperSpring final : public ModelBase<MassDamperSpring> {
 public:
  MassDamperSpring(int n_unit, int n_batch)
      : ModelBase(make_params(n_unit, n_batch), n_batch), n_(n_unit) {}

  std::string name() const override { return "mds"; }
  int state_size() const override { return 2 * n_; }
  double default_t_max() const override { return 1.0; }

  bool has_analytic_jacobian() const override { return true; }

  template <class T>
  void eval_point(const T& t, std::span<const T> p, std::span<const T> y, std::span<T> out,
                  int b) const {
    const int n = n_;
    const T* K = p.data();
    const T* C = p.data() + n;
    const T* M = p.data() + 2 * n;
    const T& fa = p[3 * n];
    const T& Tb = p[3 * n + 1 + b];
    const T* d = y.data();
    const T* v = y.data() + n;

    for (int u = 0; u < n; ++u) out[u] = v[u];
    for (int u = 0; u < n; ++u) {
      T acc(0.0);
      if (u > 0) {
        acc += (K[u] / M[u]) * (d[u] - d[u - 1]) + (C[u] / M[u]) * (v[u] - v[u - 1]);
      }
      if (u + 1 < n) {
        acc -= (K[u + 1] / M[u + 1]) * (d[u + 1] - d[u]) + (C[u + 1] / M[u + 1]) * (v[u + 1] - v[u]);
      }
      if (u == 0) acc += fa * sin(kTwoPi * t / Tb);
      out[n + u] = acc;
    }
  }

  void jacobian_analytic(const Array2d& t, const BatchedChunkVector& y,
                         BatchedBlockArray& out) const override {
    detail::check_rate_shapes(*this, t, y, y);
    const int n = n_;
    const double* K = params_.data();
    const double* C = params_.data() + n;
    const double* M = params_.data() + 2 * n;
    out.fill(0.0);
    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) {
        for (int u = 0; u < n; ++u) {
          out(k, b, u, n + u) = 1.0;
          if (u > 0) {
            const double a = K[u] / M[u], c = C[u] / M[u];
            out(k, b, n + u, u) += a;
            out(k, b, n + u, u - 1) -= a;
            out(k, b, n + u, n + u) += c;
            out(k, b, n + u, n + u - 1) -= c;
          }
          if (u + 1 < n) {
            const double a = K[u + 1] / M[u + 1], c = C[u + 1] / M[u + 1];
            out(k, b, n + u, u) += a;
            out(k, b, n + u, u + 1) -= a;
            out(k, b, n + u, n + u) += c;
            out(k, b, n + u, n + u + 1) -= c;
          }
        }
      }
    }
  }

 private:
  static std::vector<double> make_params(int n_unit, int n_batch) {
    std::vector<double> p;
    p.reserve(size_t(3 * n_unit) + 1 + n_batch);
    for (double x : linspace(1e-2, 1.0, n_unit)) p.push_back(x);    // K
    for (double x : linspace(1e-6, 1e-4, n_unit)) p.push_back(x);   // C
    for (double x : linspace(1e-7, 1e-5, n_unit)) p.push_back(x);   // M
    p.push_back(1.0);                                               // f_a
    for (double x : linspace(1e-2, 1.0, n_batch)) p.push_back(x);   // T per batch
    return p;
  }

  int n_;
};

}  // namespace

std::unique_ptr<OdeModel> build_mass_damper_spring(int n_unit, int n_batch) {
  require(n_unit >= 1 && n_batch >= 1, "build_mass_damper_spring: n_unit, n_batch >= 1");
  return std::make_unique<MassDamperSpring>(n_unit, n_batch);
}

}  // namespace chunkode
