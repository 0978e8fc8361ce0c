#include "phreg/phase.hpp"

#include "phreg/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <string>

namespace phreg {

std::string_view to_string(StructureKind kind) {
  switch (kind) {
    case StructureKind::Exponential: return "exponential";
    case StructureKind::Erlang: return "erlang";
    case StructureKind::Hyperexponential: return "hyperexp";
    case StructureKind::Coxian: return "coxian";
    case StructureKind::GeneralizedCoxian: return "gcoxian";
    case StructureKind::General: return "general";
  }
  return "general";
}

StructureKind parse_structure_kind(std::string_view name) {
  if (name == "exponential") return StructureKind::Exponential;
  if (name == "erlang") return StructureKind::Erlang;
  if (name == "hyperexp" || name == "hyperexponential") return StructureKind::Hyperexponential;
  if (name == "coxian") return StructureKind::Coxian;
  if (name == "gcoxian" || name == "generalized-coxian") return StructureKind::GeneralizedCoxian;
  if (name == "general") return StructureKind::General;
  throw StructureError("unknown structure '" + std::string(name) + "'");
}

bool MarkovStructure::allows_start(int k) const {
  switch (kind) {
    case StructureKind::Exponential:
    case StructureKind::Erlang:
    case StructureKind::Coxian: return k == 0;
    default: return true;
  }
}

bool MarkovStructure::allows_jump(int from, int to) const {
  if (from == to) return false;
  switch (kind) {
    case StructureKind::Exponential:
    case StructureKind::Hyperexponential: return false;
    case StructureKind::Erlang:
    case StructureKind::Coxian:
    case StructureKind::GeneralizedCoxian: return to == from + 1;
    case StructureKind::General: return true;
  }
  return false;
}

bool MarkovStructure::allows_exit(int k) const {
  if (kind == StructureKind::Erlang) return k == p - 1;
  return true;
}

int MarkovStructure::free_parameters() const {
  switch (kind) {
    case StructureKind::Exponential:
    case StructureKind::Erlang: return 1;
    case StructureKind::Hyperexponential:
    case StructureKind::Coxian: return 2 * p - 1;
    case StructureKind::GeneralizedCoxian: return 3 * p - 2;
    case StructureKind::General: return p * p + p - 1;
  }
  return 0;
}

void check_structure(const MarkovStructure& structure) {
  if (structure.p < 1) throw StructureError("structure needs at least one phase");
  if (structure.kind == StructureKind::Exponential && structure.p != 1)
    throw StructureError("exponential structure requires p = 1");
}

PhaseTypeLaw::PhaseTypeLaw(Vector pi, Matrix T, MarkovStructure structure)
    : pi_(std::move(pi)), T_(std::move(T)), structure_(structure) {
  check_structure(structure_);
  const int p = structure_.p;
  if (T_.rows() != p || T_.cols() != p || pi_.size() != p)
    throw DimensionError("phase-type law: pi and T must match the structure dimension");
  if (!pi_.allFinite()) throw NumericDomainError("phase-type law: pi has non-finite entries");
  matexp::check_subintensity(T_);
  if ((pi_.array() < 0.0).any()) throw DomainError("phase-type law: pi has negative entries");
  if (std::abs(pi_.sum() - 1.0) > 1e-10) throw DomainError("phase-type law: pi must sum to one");
  for (int k = 0; k < p; ++k) {
    if (!(T_(k, k) < 0.0)) throw DomainError("phase-type law: diagonal of T must be negative");
    if (!structure_.allows_start(k) && pi_(k) != 0.0)
      throw StructureError("phase-type law: pi has mass on a state the structure cannot start in");
    for (int s = 0; s < p; ++s) {
      if (s != k && !structure_.allows_jump(k, s) && T_(k, s) != 0.0)
        throw StructureError("phase-type law: T has a transition the structure forbids");
    }
  }
  exit_ = -(T_.rowwise().sum());
  for (int k = 0; k < p; ++k) {
    if (exit_(k) < 0.0) exit_(k) = 0.0;
    if (!structure_.allows_exit(k) && exit_(k) <= 1e-10 * std::abs(T_(k, k))) exit_(k) = 0.0;
    if (!structure_.allows_exit(k) && exit_(k) != 0.0)
      throw StructureError("phase-type law: exit from a state the structure forbids");
  }
  if (structure_.kind == StructureKind::Erlang) {
    const double rate = -T_(0, 0);
    for (int k = 0; k < p; ++k) {
      if (std::abs(-T_(k, k) - rate) > 1e-10 * rate)
        throw StructureError("phase-type law: Erlang states must share one rate");
    }
  }
  if (exit_.sum() <= 0.0) throw DomainError("phase-type law: absorption is unreachable");
  Eigen::FullPivLU<Matrix> lu(T_);
  if (lu.rank() < p) throw DomainError("phase-type law: T is singular (absorption is not certain)");
}

PhaseTypeLaw build_structure(const MarkovStructure& structure, std::uint64_t seed, double data_scale) {
  check_structure(structure);
  if (!(data_scale > 0.0) || !std::isfinite(data_scale))
    throw DomainError("build_structure: data_scale must be positive and finite");
  const int p = structure.p;
  std::mt19937_64 rng(seed);
  const double base = p / data_scale;
  std::uniform_real_distribution<double> unit(0.1, 1.1);
  auto rate = [&] { return unit(rng) * base; };

  Vector pi = Vector::Zero(p);
  Matrix T = Matrix::Zero(p, p);
  if (structure.kind == StructureKind::Erlang) {
    const double alpha = rate();
    for (int k = 0; k < p; ++k) {
      T(k, k) = -alpha;
      if (k + 1 < p) T(k, k + 1) = alpha;
    }
  } else {
    for (int k = 0; k < p; ++k) {
      double out = 0.0;
      for (int s = 0; s < p; ++s) {
        if (structure.allows_jump(k, s)) {
          T(k, s) = rate();
          out += T(k, s);
        }
      }
      if (structure.allows_exit(k)) out += rate();
      T(k, k) = -out;
    }
  }
  for (int k = 0; k < p; ++k) {
    if (structure.allows_start(k)) pi(k) = unit(rng);
  }
  pi /= pi.sum();

  PhaseTypeLaw raw(pi, T, structure);
  const double mean = ph_mean(raw);
  return PhaseTypeLaw(pi, T * (mean / data_scale), structure);
}

namespace {

void check_positive(double y, const char* what) {
  if (!(y > 0.0) || std::isnan(y)) throw DomainError(std::string(what) + ": y must be positive");
}

matexp::ScaledRow propagate_to(const PhaseTypeLaw& law, double z, double tol) {
  return matexp::row_exponential(law.T(), law.pi(), z, tol);
}

double exit_dot(const matexp::ScaledRow& prop, const Vector& exit) { return prop.row.dot(exit); }

}  // namespace

double iph_density(const PhaseTypeLaw& law, const Transform& transform, double y, double tol) {
  check_positive(y, "iph_density");
  if (std::isinf(y)) return 0.0;
  const auto prop = propagate_to(law, transform.g_inverse(y), tol);
  return transform.intensity(y) * std::exp(prop.log_scale) * exit_dot(prop, law.exit());
}

TailValue iph_survival(const PhaseTypeLaw& law, const Transform& transform, double y, double tol) {
  if (std::isnan(y) || y < 0.0) throw DomainError("iph_survival: y must be nonnegative");
  if (y == 0.0) return {1.0, false};
  if (std::isinf(y)) return {0.0, false};
  const auto prop = propagate_to(law, transform.g_inverse(y), tol);
  const double log_s = prop.log_scale;
  if (log_s < std::log(kSurvivalFloor)) return {kSurvivalFloor, true};
  return {std::min(1.0, std::exp(log_s)), false};
}

TailValue iph_hazard(const PhaseTypeLaw& law, const Transform& transform, double y, double tol) {
  check_positive(y, "iph_hazard");
  const auto prop = propagate_to(law, transform.g_inverse(y), tol);
  const bool underflow = prop.log_scale < std::log(kSurvivalFloor);
  return {transform.intensity(y) * exit_dot(prop, law.exit()), underflow};
}

TailValue iph_cumhazard(const PhaseTypeLaw& law, const Transform& transform, double y, double tol) {
  if (std::isnan(y) || y < 0.0) throw DomainError("iph_cumhazard: y must be nonnegative");
  if (y == 0.0) return {0.0, false};
  const auto prop = propagate_to(law, transform.g_inverse(y), tol);
  const bool underflow = prop.log_scale < std::log(kSurvivalFloor);
  return {std::max(0.0, -prop.log_scale), underflow};
}

namespace {

// Per-state jump distributions of the embedded chain; index p stands for absorption.
class JumpChain {
 public:
  explicit JumpChain(const PhaseTypeLaw& law) : p_(law.phases()) {
    std::vector<double> start(law.pi().data(), law.pi().data() + p_);
    start_ = std::discrete_distribution<int>(start.begin(), start.end());
    for (int k = 0; k < p_; ++k) {
      std::vector<double> w(static_cast<std::size_t>(p_) + 1, 0.0);
      for (int s = 0; s < p_; ++s) {
        if (s != k) w[static_cast<std::size_t>(s)] = law.T()(k, s);
      }
      w[static_cast<std::size_t>(p_)] = law.exit()(k);
      jumps_.emplace_back(w.begin(), w.end());
      rates_.push_back(-law.T()(k, k));
    }
  }

  double draw(std::mt19937_64& rng) {
    int state = start_(rng);
    double time = 0.0;
    while (state < p_) {
      std::exponential_distribution<double> sojourn(rates_[static_cast<std::size_t>(state)]);
      time += sojourn(rng);
      state = jumps_[static_cast<std::size_t>(state)](rng);
    }
    return time;
  }

 private:
  int p_;
  std::discrete_distribution<int> start_;
  std::vector<std::discrete_distribution<int>> jumps_;
  std::vector<double> rates_;
};

}  // namespace

double sample_absorption_time(const PhaseTypeLaw& law, std::mt19937_64& rng) {
  JumpChain chain(law);
  return chain.draw(rng);
}

std::vector<double> sample(const PhaseTypeLaw& law, const Transform& transform, std::size_t n,
                           std::uint64_t seed) {
  if (n == 0) throw DomainError("sample: n must be at least 1");
  std::mt19937_64 rng(seed);
  JumpChain chain(law);
  std::vector<double> out(n);
  for (auto& y : out) y = transform.g(chain.draw(rng));
  return out;
}

double dominant_eigenvalue(const Matrix& T) {
  const Eigen::Index p = T.rows();
  bool upper = true;
  for (Eigen::Index i = 1; i < p && upper; ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (T(i, j) != 0.0) {
        upper = false;
        break;
      }
  if (upper) return T.diagonal().maxCoeff();
  Eigen::EigenSolver<Matrix> solver(T, false);
  if (solver.info() != Eigen::Success) throw NumericDomainError("eigenvalue computation failed");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& ev : solver.eigenvalues()) {
    if (std::abs(ev.imag()) <= 1e-10 * (1.0 + std::abs(ev.real()))) best = std::max(best, ev.real());
  }
  if (!std::isfinite(best)) throw NumericDomainError("T has no real eigenvalue");
  return best;
}

double tail_index(const PhaseTypeLaw& law, const Transform& transform) {
  if (transform.family() != TransformFamily::Pareto)
    throw UnsupportedError("tail_index is only defined for the Pareto transform");
  return -1.0 / dominant_eigenvalue(law.T());
}

double ph_mean(const PhaseTypeLaw& law) {
  const Matrix neg = -law.T();
  const Vector ones = Vector::Ones(law.phases());
  const Vector x = neg.partialPivLu().solve(ones);
  const double mean = law.pi().dot(x);
  if (!std::isfinite(mean) || !(mean > 0.0)) throw NumericDomainError("ph_mean: (-T) is singular");
  return mean;
}

}  // namespace phreg
