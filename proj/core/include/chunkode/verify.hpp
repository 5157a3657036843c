#pragma once

#include <string>
#include <vector>

#include "chunkode/linalg.hpp"

namespace chunkode {

// Result of one verification suite: how many checks ran and a message per
// failed check (empty means everything held).
struct VerifyReport {
  std::string suite;
  int checks = 0;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

const std::vector<std::string>& verify_suite_names();  // solvers, jacobians, gradients,
                                                       // convergence, all

// Runs the named invariant suite at fixed seeds. Throws Error on an unknown
// suite name.
VerifyReport run_verify_suite(const std::string& suite);

// Well-conditioned randomized instances shared by the solver checks:
// diagonally dominant random diagonal blocks with mild random couplings.
BlockBidiagonalSystem make_random_system(int n_chunk, int n_batch, int n_size,
                                         unsigned long long seed);
BatchedChunkVector make_random_rhs(int n_chunk, int n_batch, int n_size, unsigned long long seed);

}  // namespace chunkode
