#pragma once

// EM algorithm for PH(pi, T) on fully observed absorption times.

#include "phreg/phase.hpp"

#include <span>
#include <vector>

namespace phreg {

struct ComputeOptions {
  double tol = matexp::kDefaultTol;  // kernel truncation tolerance
  int threads = 1;
};

// Conditional expectations of the complete-data statistics, summed over observations.
struct SufficientStats {
  Vector starts;   // B_k
  Vector sojourn;  // Z_k
  Matrix jumps;    // N_ks, diagonal unused
  Vector exits;    // N_k
  double total_weight = 0.0;
};

// Duplicate values merged into multiplicity weights, sorted ascending.
struct WeightedSample {
  std::vector<double> values;
  std::vector<double> weights;
};
WeightedSample aggregate(std::span<const double> z, std::span<const double> weights = {});

SufficientStats e_step(const PhaseTypeLaw& law, std::span<const double> z,
                       std::span<const double> weights = {}, const ComputeOptions& options = {});

PhaseTypeLaw m_step(const SufficientStats& stats, const MarkovStructure& structure);

// log f_Z(z_i) for every observation; -inf marks an underflowed contribution.
std::vector<double> ph_log_densities(const PhaseTypeLaw& law, std::span<const double> z,
                                     double tol = matexp::kDefaultTol);

// Weighted sum of log densities. Throws LikelihoodUnderflowError naming the first
// observation whose density is zero in floating point.
double ph_loglik(const PhaseTypeLaw& law, std::span<const double> z,
                 std::span<const double> weights = {}, double tol = matexp::kDefaultTol);

struct EmOptions {
  double stop_tol = 1e-8;  // relative log-likelihood improvement
  int max_iter = 5000;
  ComputeOptions compute;
};

struct EmResult {
  PhaseTypeLaw law;
  std::vector<double> trace;  // trace[0] is the starting log-likelihood
  int iterations = 0;
  bool converged = false;
};

EmResult fit_ph(const PhaseTypeLaw& start, std::span<const double> z, std::span<const double> weights = {},
                const EmOptions& options = {});

}  // namespace phreg
