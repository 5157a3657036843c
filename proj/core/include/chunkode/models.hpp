#pragma once

#include <memory>
#include <optional>
#include <string>

#include "chunkode/ode_model.hpp"

namespace chunkode {

// Serial chain of spring / damper / mass elements, pinned at one end, with a
// sinusoidal force on element 1. State [d_1..d_n, v_1..v_n], n_size = 2 n_unit.
// The drive period T is a per-batch parameter.
std::unique_ptr<OdeModel> build_mass_damper_spring(int n_unit, int n_batch);

// Weakly coupled excitable units, each carrying a membrane potential V and
// three first-order gates m, h, n. State interleaved [V_1, m_1, h_1, n_1, ...],
// n_size = 4 n_unit. The drive amplitude I_a is per batch; the drive period
// is per unit, optionally overridden with a single scalar period.
std::unique_ptr<OdeModel> build_neuron(int n_unit, int n_batch,
                                       std::optional<double> period_override = {});

// Rate-dependent viscoplasticity with isotropic hardening K and n_unit
// backstresses. State [sigma, K, X_1..X_n], n_size = 2 + n_unit. The strain
// rate amplitude is per batch.
std::unique_ptr<OdeModel> build_chaboche(int n_unit, int n_batch);

// Three tanh layers as the right-hand side, fed [y; f(t)]. State width
// n_unit; parameters are all weights and biases, drawn once from a seeded
// uniform range and frozen. The forcing period T is per batch but is not a
// differentiable parameter.
std::unique_ptr<OdeModel> build_neural_ode(int n_unit, int n_batch, unsigned long long seed = 7);

// Small diagnostic systems used by the verification suites and tests.
std::unique_ptr<OdeModel> build_scalar_decay(double p0);     // dy/dt = -p y, one parameter
std::unique_ptr<OdeModel> build_constant_rate(double c0);    // dy/dt = p, one parameter

// Map a problem key in {mds, neuron, chaboche, node} to its builder.
// Throws Error on an unknown key.
std::unique_ptr<OdeModel> build_problem(const std::string& key, int n_unit, int n_batch,
                                        unsigned long long seed = 7);

}  // namespace chunkode
