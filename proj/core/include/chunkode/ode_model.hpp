#pragma once

#include <algorithm>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "chunkode/arrays.hpp"
#include "chunkode/dual.hpp"

namespace chunkode {

enum class JacobianStrategy { analytic, forward_ad, finite_difference };

// A batched autonomous-in-shape ODE right-hand side dy/dt = h(y, t; p).
//
// Evaluation is always over a (chunk, batch) grid of points: t has shape
// (n_chunk, n_batch), states (n_chunk, n_batch, n_size). Batch lanes may see
// different parameters (the flat parameter vector can carry per-lane
// segments), so a model built for a given batch width only accepts arrays of
// that width; n_batch() == 0 means any width is accepted.
//
// Models are immutable: changing parameters produces a new instance via
// with_params, which keeps evaluation safe to share across threads.
class OdeModel {
 public:
  virtual ~OdeModel() = default;

  virtual std::string name() const = 0;
  virtual int state_size() const = 0;
  virtual int n_batch() const { return 0; }
  virtual double default_t_max() const { return 1.0; }

  virtual const std::vector<double>& params() const = 0;
  virtual std::unique_ptr<OdeModel> with_params(std::span<const double> p) const = 0;

  // out(k, b, :) = h(y(k, b, :), t(k, b)); one call covers the whole grid.
  virtual void rate(const Array2d& t, const BatchedChunkVector& y,
                    BatchedChunkVector& out) const = 0;

  virtual bool has_analytic_jacobian() const { return false; }
  virtual void jacobian_analytic(const Array2d& t, const BatchedChunkVector& y,
                                 BatchedBlockArray& out) const;

  // Forward-mode sweeps; available whenever the model exposes a templated
  // evaluation core (every bundled model does).
  virtual bool has_forward_ad() const { return false; }
  virtual void jacobian_forward_ad(const Array2d& t, const BatchedChunkVector& y,
                                   BatchedBlockArray& out) const;
  virtual void param_vjp_forward_ad(const Array2d& t, const BatchedChunkVector& y,
                                    const BatchedChunkVector& w,
                                    std::span<double> grad_accum) const;

  virtual bool has_analytic_param_vjp() const { return false; }
  virtual void param_vjp_analytic(const Array2d& t, const BatchedChunkVector& y,
                                  const BatchedChunkVector& w,
                                  std::span<double> grad_accum) const;
};

// dh/dy as (n_chunk, n_batch, n_size, n_size) blocks, by the requested
// strategy. Throws StrategyUnavailable if the model lacks the requested
// derivative path and NonFiniteOutput if any entry comes back non-finite.
// Central differences use the step 1e-6 * (1 + |y_j|) per point.
void jacobian_state(const OdeModel& model, const Array2d& t, const BatchedChunkVector& y,
                    JacobianStrategy strategy, BatchedBlockArray& out);

// Accumulates sum over grid points of w(k, b, :) . dh/dp(y(k, b, :), t(k, b))
// into grad_accum (length = model.params().size()). Uses the analytic path
// when the model has one, forward-mode sweeps otherwise, and central finite
// differences as the last resort.
void parameter_vjp(const OdeModel& model, const Array2d& t, const BatchedChunkVector& y,
                   const BatchedChunkVector& w, std::span<double> grad_accum);

// Best derivative path the model actually implements.
inline JacobianStrategy preferred_jacobian_strategy(const OdeModel& m) {
  if (m.has_analytic_jacobian()) return JacobianStrategy::analytic;
  if (m.has_forward_ad()) return JacobianStrategy::forward_ad;
  return JacobianStrategy::finite_difference;
}

namespace detail {
void check_rate_shapes(const OdeModel& m, const Array2d& t, const BatchedChunkVector& y,
                       const BatchedChunkVector& out);

// Strategy dispatch without the output finiteness scan. Hot loops that catch
// non-finite values downstream anyway (through residual norms or pivot
// checks) use this to avoid re-streaming the block array once per iteration.
void jacobian_state_unscanned(const OdeModel& model, const Array2d& t,
                              const BatchedChunkVector& y, JacobianStrategy strategy,
                              BatchedBlockArray& out);
}

// CRTP helper deriving the forward-mode paths (and the shared bookkeeping)
// from a single templated evaluation core on the derived model:
//
//   template <class T>
//   void eval_point(const T& t, std::span<const T> p, std::span<const T> y,
//                   std::span<T> out, int batch) const;
//
// The core sees parameters through the span so the same code serves plain
// evaluation, state tangents, and parameter tangents.
template <class Derived>
class ModelBase : public OdeModel {
 public:
  ModelBase(std::vector<double> params, int batch_width)
      : params_(std::move(params)), n_batch_(batch_width) {}

  int n_batch() const override { return n_batch_; }
  const std::vector<double>& params() const override { return params_; }

  std::unique_ptr<OdeModel> with_params(std::span<const double> p) const override {
    require(p.size() == params_.size(), "with_params: parameter count must not change");
    auto copy = std::make_unique<Derived>(static_cast<const Derived&>(*this));
    copy->params_.assign(p.begin(), p.end());
    return copy;
  }

  void rate(const Array2d& t, const BatchedChunkVector& y, BatchedChunkVector& out) const override {
    detail::check_rate_shapes(*this, t, y, out);
    const Derived& d = static_cast<const Derived&>(*this);
    const std::span<const double> p(params_);
    for (int k = 0; k < y.n_chunk(); ++k) {
      for (int b = 0; b < y.n_batch(); ++b) {
        d.eval_point(t(k, b), p, y.point(k, b), out.point(k, b), b);
      }
    }
  }

  bool has_forward_ad() const override { return true; }

  void jacobian_forward_ad(const Array2d& t, const BatchedChunkVector& y,
                           BatchedBlockArray& out) const override {
    const Derived& d = static_cast<const Derived&>(*this);
    const int n = state_size();
    std::vector<Dual8> pd(params_.begin(), params_.end());
    std::vector<Dual8> yd(n), od(n);
    for (int j0 = 0; j0 < n; j0 += kDualLanes) {
      const int lanes = std::min(kDualLanes, n - j0);
      for (int k = 0; k < y.n_chunk(); ++k) {
        for (int b = 0; b < y.n_batch(); ++b) {
          for (int i = 0; i < n; ++i) yd[i] = Dual8(y(k, b, i));
          for (int l = 0; l < lanes; ++l) yd[j0 + l].seed(l);
          d.eval_point(Dual8(t(k, b)), std::span<const Dual8>(pd), std::span<const Dual8>(yd),
                       std::span<Dual8>(od), b);
          for (int i = 0; i < n; ++i) {
            for (int l = 0; l < lanes; ++l) out(k, b, i, j0 + l) = od[i].d[l];
          }
        }
      }
    }
  }

  void param_vjp_forward_ad(const Array2d& t, const BatchedChunkVector& y,
                            const BatchedChunkVector& w,
                            std::span<double> grad_accum) const override {
    const Derived& d = static_cast<const Derived&>(*this);
    const int n = state_size();
    const int np = int(params_.size());
    std::vector<Dual8> pd(params_.begin(), params_.end());
    std::vector<Dual8> yd(n), od(n);
    for (int j0 = 0; j0 < np; j0 += kDualLanes) {
      const int lanes = std::min(kDualLanes, np - j0);
      if (j0 > 0) {
        // clear the seeds of the previous window
        for (int l = 0; l < kDualLanes; ++l) pd[j0 - kDualLanes + l] = Dual8(params_[j0 - kDualLanes + l]);
      }
      for (int l = 0; l < lanes; ++l) pd[j0 + l].seed(l);
      for (int k = 0; k < y.n_chunk(); ++k) {
        for (int b = 0; b < y.n_batch(); ++b) {
          for (int i = 0; i < n; ++i) yd[i] = Dual8(y(k, b, i));
          d.eval_point(Dual8(t(k, b)), std::span<const Dual8>(pd), std::span<const Dual8>(yd),
                       std::span<Dual8>(od), b);
          for (int l = 0; l < lanes; ++l) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += w(k, b, i) * od[i].d[l];
            grad_accum[j0 + l] += s;
          }
        }
      }
    }
  }

 protected:
  friend Derived;
  std::vector<double> params_;
  int n_batch_ = 0;
};

}  // namespace chunkode
