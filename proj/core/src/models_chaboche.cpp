#include <numbers>

#include "chunkode/models.hpp"

namespace chunkode {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Viscoplastic stress update under a sinusoidal strain rate: stress sigma,
// isotropic hardening K relaxing to K_inf, and n_unit backstresses X_i that
// translate the yield surface. The plastic strain rate follows a power-law
// ramp of the overstress. At the yield surface the ramp and |.| kinks take
// the fixed subgradients d<x>^n/dx = 0 for x <= 0 and d|x|/dx = 0 at 0, and
// sign(0) = 0, so derivatives are defined everywhere. Parameter layout:
//   [E, n, eta, sigma_0, K_inf, tau, C_1..C_n, gamma_1..gamma_n,
//    eps_a_1..eps_a_{n_batch}, T]
class Chaboche final : public ModelBase<Chaboche> {
 public:
  Chaboche(int n_unit, int n_batch)
      : ModelBase(make_params(n_unit, n_batch), n_batch), n_(n_unit) {}

  std::string name() const override { return "chaboche"; }
  int state_size() const override { return 2 + n_; }
  double default_t_max() const override { return 10.0; }

  bool has_analytic_jacobian() const override { return true; }

  template <class T>
  void eval_point(const T& t, std::span<const T> p, std::span<const T> y, std::span<T> out,
                  int b) const {
    const int n = n_;
    const T& E = p[0];
    const T& nn = p[1];
    const T& eta = p[2];
    const T& s0 = p[3];
    const T& Kinf = p[4];
    const T& tau = p[5];
    const T* C = p.data() + 6;
    const T* gam = p.data() + 6 + n;
    const T& ea = p[6 + 2 * n + b];
    const T& Tp = p[6 + 2 * n + n_batch_];

    const T& sig = y[0];
    const T& K = y[1];
    const T* X = y.data() + 2;

    T s = sig;
    for (int i = 0; i < n; ++i) s -= X[i];
    const double sg = sign_of(s);
    const T over = (fabs(s) - K - s0) / eta;
    const T ramp = pow(positive_part(over), nn);
    const T ep = ramp * sg;
    const T ep_abs = ramp * (sg * sg);

    out[0] = E * (ea * sin(kTwoPi * t / Tp) - ep);
    out[1] = tau * (Kinf - K);
    for (int i = 0; i < n; ++i) {
      out[2 + i] = (2.0 / 3.0) * C[i] * ep - gam[i] * X[i] * ep_abs;
    }
  }

  bool has_analytic_param_vjp() const override { return true; }

  // w-weighted rows of dh/dp, one pass per point. The overstress chain is
  // shared: S = sum_i w_i * dh_i/dramp collects every route through the
  // power-law ramp, so n, eta, and sigma_0 each cost one multiply. Kink
  // handling mirrors the dual-number rules: below or on the yield surface
  // the ramp contributes nothing, and the exponent term vanishes unless the
  // ramp base is strictly positive.
  void param_vjp_analytic(const Array2d& t, const BatchedChunkVector& y,
                          const BatchedChunkVector& w, std::span<double> grad) const override {
    const int n = n_;
    const double E = params_[0];
    const double nn = params_[1];
    const double eta = params_[2];
    const double s0 = params_[3];
    const double Kinf = params_[4];
    const double tau = params_[5];
    const double* C = params_.data() + 6;
    const double* gam = params_.data() + 6 + n;
    const double* ea = params_.data() + 6 + 2 * n;
    const double Tp = params_[size_t(6 + 2 * n) + n_batch_];
    const double two_pi_over_T = kTwoPi / Tp;

    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) {
        const double* yp = y.point(k, b).data();
        const double* wp = w.point(k, b).data();
        const double sig = yp[0];
        const double K = yp[1];
        const double* X = yp + 2;
        const double w_sig = wp[0];
        const double w_K = wp[1];
        const double* w_X = wp + 2;

        double s = sig;
        for (int i = 0; i < n; ++i) s -= X[i];
        const double sg = sign_of(s);
        const double sg2 = sg * sg;
        const double over = (std::fabs(s) - K - s0) / eta;

        const double tk = t(k, b);
        const double phase = two_pi_over_T * tk;
        const double sinp = std::sin(phase);

        grad[4] += w_K * tau;
        grad[5] += w_K * (Kinf - K);
        grad[size_t(6 + 2 * n) + b] += w_sig * E * sinp;
        grad[size_t(6 + 2 * n) + n_batch_] +=
            w_sig * E * ea[b] * std::cos(phase) * (-phase / Tp);

        if (over > 0.0) {
          const double ramp = pow_value(over, nn);
          const double dramp = nn * pow_value(over, nn - 1.0);
          const double ep = ramp * sg;
          const double ep_abs = ramp * sg2;

          double S = -E * w_sig * sg;
          for (int i = 0; i < n; ++i) {
            S += w_X[i] * ((2.0 / 3.0) * C[i] * sg - gam[i] * X[i] * sg2);
            grad[size_t(6) + i] += w_X[i] * (2.0 / 3.0) * ep;
            grad[size_t(6 + n) + i] -= w_X[i] * X[i] * ep_abs;
          }
          grad[0] += w_sig * (ea[b] * sinp - ep);
          grad[1] += S * ramp * std::log(over);
          grad[2] += S * dramp * (-over / eta);
          grad[3] += S * dramp * (-1.0 / eta);
        } else {
          grad[0] += w_sig * ea[b] * sinp;
        }
      }
    }
  }

  void jacobian_analytic(const Array2d& t, const BatchedChunkVector& y,
                         BatchedBlockArray& out) const override {
    detail::check_rate_shapes(*this, t, y, y);
    const int n = n_;
    const double E = params_[0];
    const double nn = params_[1];
    const double eta = params_[2];
    const double s0 = params_[3];
    const double tau = params_[5];
    const double* C = params_.data() + 6;
    const double* gam = params_.data() + 6 + n;

    out.fill(0.0);
    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) {
        const double sig = y(k, b, 0);
        const double K = y(k, b, 1);
        double s = sig;
        for (int i = 0; i < n; ++i) s -= y(k, b, 2 + i);
        const double sg = sign_of(s);
        const double sg2 = sg * sg;
        const double over = (std::fabs(s) - K - s0) / eta;
        // D = d<over>^n / d(numerator); zero on and below the yield surface
        const double D = over > 0.0 ? nn * pow_value(over, nn - 1.0) / eta : 0.0;
        const double ramp = over > 0.0 ? pow_value(over, nn) : 0.0;

        out(k, b, 0, 0) = -E * D * sg2;
        out(k, b, 0, 1) = E * D * sg;
        for (int j = 0; j < n; ++j) out(k, b, 0, 2 + j) = E * D * sg2;

        out(k, b, 1, 1) = -tau;

        for (int i = 0; i < n; ++i) {
          const double Xi = y(k, b, 2 + i);
          const double ci = (2.0 / 3.0) * C[i];
          out(k, b, 2 + i, 0) = ci * D * sg2 - gam[i] * Xi * D * sg;
          out(k, b, 2 + i, 1) = -ci * D * sg + gam[i] * Xi * D * sg2;
          for (int j = 0; j < n; ++j) {
            out(k, b, 2 + i, 2 + j) = -ci * D * sg2 + gam[i] * Xi * D * sg;
          }
          out(k, b, 2 + i, 2 + i) -= gam[i] * ramp * sg2;  // the |ep| factor itself
        }
      }
    }
  }

 private:
  static std::vector<double> make_params(int n_unit, int n_batch) {
    std::vector<double> p = {10.0, 5.0, 2.0, 1.0, 10.0, 1.0};  // E, n, eta, sigma_0, K_inf, tau
    for (double x : linspace(0.1, 1.0, n_unit)) p.push_back(x);   // C
    for (double x : linspace(0.1, 0.5, n_unit)) p.push_back(x);   // gamma
    for (double x : linspace(0.1, 1.0, n_batch)) p.push_back(x);  // strain rate amplitude
    p.push_back(1.0);                                             // T
    return p;
  }

  int n_;
};

}  // namespace

std::unique_ptr<OdeModel> build_chaboche(int n_unit, int n_batch) {
  require(n_unit >= 1 && n_batch >= 1, "build_chaboche: n_unit, n_batch >= 1");
  return std::make_unique<Chaboche>(n_unit, n_batch);
}

}  // namespace chunkode
