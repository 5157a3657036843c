#include <numbers>

#include "chunkode/models.hpp"

namespace chunkode {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// n_unit membrane patches, each with potential V and gates m, h, n relaxing
// to their rest values, all-to-all coupled through the conductances g_C and
// driven by a per-batch-amplitude sinusoidal current. Parameter layout is
// fourteen per-unit segments in the order
//   [C, g_Na, E_Na, g_K, E_K, g_L, E_L, m_inf, tau_m, h_inf, tau_h, n_inf, tau_n, g_C]
// followed by I_a per batch and the per-unit drive periods T.
class Neuron final : public ModelBase<Neuron> {
 public:
  Neuron(int n_unit, int n_batch, std::optional<double> period_override)
      : ModelBase(make_params(n_unit, n_batch, period_override), n_batch), n_(n_unit) {}

  std::string name() const override { return "neuron"; }
  int state_size() const override { return 4 * n_; }
  double default_t_max() const override { return 10.0; }

  bool has_analytic_jacobian() const override { return true; }

  template <class T>
  void eval_point(const T& t, std::span<const T> p, std::span<const T> y, std::span<T> out,
                  int b) const {
    const int n = n_;
    const T* C = p.data();
    const T* gNa = p.data() + n;
    const T* ENa = p.data() + 2 * n;
    const T* gK = p.data() + 3 * n;
    const T* EK = p.data() + 4 * n;
    const T* gL = p.data() + 5 * n;
    const T* EL = p.data() + 6 * n;
    const T* minf = p.data() + 7 * n;
    const T* taum = p.data() + 8 * n;
    const T* hinf = p.data() + 9 * n;
    const T* tauh = p.data() + 10 * n;
    const T* ninf = p.data() + 11 * n;
    const T* taun = p.data() + 12 * n;
    const T* gC = p.data() + 13 * n;
    const T& Ia = p[14 * n + b];
    const T* Tp = p.data() + 14 * n + n_batch_;

    T vsum(0.0);
    for (int u = 0; u < n; ++u) vsum += y[4 * u];

    for (int u = 0; u < n; ++u) {
      const T& V = y[4 * u];
      const T& m = y[4 * u + 1];
      const T& h = y[4 * u + 2];
      const T& ng = y[4 * u + 3];
      const T m3 = m * m * m;
      const T n2 = ng * ng;
      const T n4 = n2 * n2;
      T acc = -gNa[u] * m3 * h * (V - ENa[u]) - gK[u] * n4 * (V - EK[u]) - gL[u] * (V - EL[u]);
      acc += Ia * sin(kTwoPi * t / Tp[u]);
      acc += gC[u] * (double(n) * V - vsum);
      out[4 * u] = acc / C[u];
      out[4 * u + 1] = (minf[u] - m) / taum[u];
      out[4 * u + 2] = (hinf[u] - h) / tauh[u];
      out[4 * u + 3] = (ninf[u] - ng) / taun[u];
    }
  }

  void jacobian_analytic(const Array2d& t, const BatchedChunkVector& y,
                         BatchedBlockArray& out) const override {
    detail::check_rate_shapes(*this, t, y, y);
    const int n = n_;
    const double* C = params_.data();
    const double* gNa = params_.data() + n;
    const double* ENa = params_.data() + 2 * n;
    const double* gK = params_.data() + 3 * n;
    const double* EK = params_.data() + 4 * n;
    const double* gL = params_.data() + 5 * n;
    const double* taum = params_.data() + 8 * n;
    const double* tauh = params_.data() + 10 * n;
    const double* taun = params_.data() + 12 * n;
    const double* gC = params_.data() + 13 * n;

    out.fill(0.0);
    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) {
        for (int u = 0; u < n; ++u) {
          const int q = 4 * u;
          const double V = y(k, b, q);
          const double m = y(k, b, q + 1);
          const double h = y(k, b, q + 2);
          const double ng = y(k, b, q + 3);
          const double m3 = m * m * m;
          const double n3 = ng * ng * ng;
          const double invC = 1.0 / C[u];

          // every potential feeds every other through the coupling sum
          for (int j = 0; j < n; ++j) out(k, b, q, 4 * j) = -gC[u] * invC;
          out(k, b, q, q) =
              (-gNa[u] * m3 * h - gK[u] * n3 * ng - gL[u] + gC[u] * double(n - 1)) * invC;
          out(k, b, q, q + 1) = -3.0 * gNa[u] * m * m * h * (V - ENa[u]) * invC;
          out(k, b, q, q + 2) = -gNa[u] * m3 * (V - ENa[u]) * invC;
          out(k, b, q, q + 3) = -4.0 * gK[u] * n3 * (V - EK[u]) * invC;

          out(k, b, q + 1, q + 1) = -1.0 / taum[u];
          out(k, b, q + 2, q + 2) = -1.0 / tauh[u];
          out(k, b, q + 3, q + 3) = -1.0 / taun[u];
        }
      }
    }
  }

 private:
  static std::vector<double> make_params(int n_unit, int n_batch,
                                         std::optional<double> period_override) {
    std::vector<double> p;
    p.reserve(size_t(15 * n_unit) + n_batch);
    auto unit = [&](double lo, double hi) {
      for (double x : linspace(lo, hi, n_unit)) p.push_back(x);
    };
    unit(0.1, 1.0);    // C
    unit(0.1, 1.0);    // g_Na
    unit(0.1, 1.0);    // E_Na
    unit(0.1, 1.0);    // g_K
    unit(0.1, 1.0);    // E_K
    unit(0.1, 1.0);    // g_L
    unit(0.1, 1.0);    // E_L
    unit(0.1, 1.0);    // m_inf
    unit(0.5, 5.0);    // tau_m
    unit(0.1, 1.0);    // h_inf
    unit(1.5, 15.0);   // tau_h
    unit(0.1, 1.0);    // n_inf
    unit(1.0, 10.0);   // tau_n
    unit(1e-3, 1e-2);  // g_C
    for (double x : linspace(0.1, 1.0, n_batch)) p.push_back(x);  // I_a
    if (period_override) {
      for (int u = 0; u < n_unit; ++u) p.push_back(*period_override);
    } else {
      unit(0.5, 2.0);  // T
    }
    return p;
  }

  int n_;
};

}  // namespace

std::unique_ptr<OdeModel> build_neuron(int n_unit, int n_batch,
                                       std::optional<double> period_override) {
  require(n_unit >= 1 && n_batch >= 1, "build_neuron: n_unit, n_batch >= 1");
  return std::make_unique<Neuron>(n_unit, n_batch, period_override);
}

}  // namespace chunkode
