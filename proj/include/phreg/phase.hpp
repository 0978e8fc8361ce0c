#pragma once

#include "phreg/matexp.hpp"
#include "phreg/transform.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace phreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class StructureKind { Exponential, Erlang, Hyperexponential, Coxian, GeneralizedCoxian, General };

std::string_view to_string(StructureKind kind);
// Accepts the command-line spellings: exponential, erlang, hyperexp, coxian, gcoxian, general.
StructureKind parse_structure_kind(std::string_view name);

struct MarkovStructure {
  StructureKind kind = StructureKind::General;
  int p = 1;

  bool allows_start(int k) const;
  bool allows_jump(int from, int to) const;
  bool allows_exit(int k) const;
  // Free rate / probability parameters of (pi, T) under this structure.
  int free_parameters() const;
};

// Throws StructureError unless `structure` is internally consistent (p >= 1, p = 1 for exponential).
void check_structure(const MarkovStructure& structure);

// PH(pi, T): initial distribution and sub-intensity matrix with a declared zero pattern.
class PhaseTypeLaw {
 public:
  PhaseTypeLaw(Vector pi, Matrix T, MarkovStructure structure);

  const Vector& pi() const noexcept { return pi_; }
  const Matrix& T() const noexcept { return T_; }
  const Vector& exit() const noexcept { return exit_; }  // t = -T e
  const MarkovStructure& structure() const noexcept { return structure_; }
  int phases() const noexcept { return structure_.p; }

 private:
  Vector pi_;
  Matrix T_;
  Vector exit_;
  MarkovStructure structure_;
};

// Random law with the exact zero pattern of `structure`, rescaled so that its mean is data_scale.
PhaseTypeLaw build_structure(const MarkovStructure& structure, std::uint64_t seed, double data_scale);

// Value that may have been clamped because the survival function underflowed.
struct TailValue {
  double value = 0.0;
  bool underflow = false;
};

inline constexpr double kSurvivalFloor = 1e-300;

double iph_density(const PhaseTypeLaw& law, const Transform& transform, double y,
                   double tol = matexp::kDefaultTol);
TailValue iph_survival(const PhaseTypeLaw& law, const Transform& transform, double y,
                       double tol = matexp::kDefaultTol);
// Hazard and cumulative hazard are evaluated in log space, so they stay finite when
// the survival function underflows; the underflow is reported through the flag.
TailValue iph_hazard(const PhaseTypeLaw& law, const Transform& transform, double y,
                     double tol = matexp::kDefaultTol);
TailValue iph_cumhazard(const PhaseTypeLaw& law, const Transform& transform, double y,
                        double tol = matexp::kDefaultTol);

// Absorption time of the embedded jump chain (one PH(pi, T) draw).
double sample_absorption_time(const PhaseTypeLaw& law, std::mt19937_64& rng);
std::vector<double> sample(const PhaseTypeLaw& law, const Transform& transform, std::size_t n,
                           std::uint64_t seed);

// -1 / (largest real eigenvalue of T); only defined for the Pareto family.
double tail_index(const PhaseTypeLaw& law, const Transform& transform);
// Largest real eigenvalue of T (the -chi of the asymptotic expansions).
double dominant_eigenvalue(const Matrix& T);

// pi^T (-T)^{-1} e
double ph_mean(const PhaseTypeLaw& law);

}  // namespace phreg
