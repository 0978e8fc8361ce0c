#include "phreg/emfit.hpp"

#include "phreg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <thread>

namespace phreg {

namespace {

void check_observations(std::span<const double> z, std::span<const double> weights) {
  if (z.empty()) throw DimensionError("no observations");
  if (!weights.empty() && weights.size() != z.size())
    throw DimensionError("weights must have one entry per observation");
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) throw NumericDomainError("observation " + std::to_string(i) + " is not finite");
    if (!(z[i] > 0.0)) throw DomainError("observation " + std::to_string(i) + " is not positive");
    if (!weights.empty() && (!std::isfinite(weights[i]) || weights[i] < 0.0))
      throw DomainError("weight " + std::to_string(i) + " is negative or not finite");
  }
}

SufficientStats zero_stats(int p) {
  SufficientStats s;
  s.starts = Vector::Zero(p);
  s.sojourn = Vector::Zero(p);
  s.jumps = Matrix::Zero(p, p);
  s.exits = Vector::Zero(p);
  return s;
}

// Accumulates positions [begin, end) of an aggregated sample.
void accumulate(const PhaseTypeLaw& law, const WeightedSample& sample, std::size_t begin,
                std::size_t end, double tol, SufficientStats& out) {
  const Matrix& T = law.T();
  const Vector& t = law.exit();
  const Vector& pi = law.pi();
  const int p = law.phases();
  for (std::size_t i = begin; i < end; ++i) {
    const double w = sample.weights[i];
    if (w == 0.0) continue;
    const auto blocks = matexp::van_loan_scaled(T, t, pi, sample.values[i], tol);
    const Vector a = blocks.exp_ty.transpose() * pi;  // (pi^T e^{Tz})^T
    const Vector b = blocks.exp_ty * t;
    const double den = a.dot(t);
    if (!(den > 0.0) || !std::isfinite(den))
      throw LikelihoodUnderflowError(i, "e_step: density underflow at z = " + std::to_string(sample.values[i]));
    const double scale = w / den;
    out.starts.array() += scale * pi.array() * b.array();
    out.sojourn += scale * blocks.integral.diagonal();
    for (int k = 0; k < p; ++k) {
      for (int s = 0; s < p; ++s) {
        if (s != k && T(k, s) > 0.0) out.jumps(k, s) += scale * T(k, s) * blocks.integral(s, k);
      }
    }
    out.exits.array() += scale * t.array() * a.array();
    out.total_weight += w;
  }
}

void accumulate_parallel(const PhaseTypeLaw& law, const WeightedSample& sample, double tol,
                         std::vector<SufficientStats>& partial) {
  const std::size_t n = sample.values.size();
  const std::size_t workers = partial.size();
  if (workers == 1) {
    accumulate(law, sample, 0, n, tol, partial[0]);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        accumulate(law, sample, std::min(n, w * chunk), std::min(n, (w + 1) * chunk), tol, partial[w]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

WeightedSample aggregate(std::span<const double> z, std::span<const double> weights) {
  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z[a] < z[b]; });
  WeightedSample out;
  for (std::size_t idx : order) {
    const double w = weights.empty() ? 1.0 : weights[idx];
    if (!out.values.empty() && out.values.back() == z[idx]) {
      out.weights.back() += w;
    } else {
      out.values.push_back(z[idx]);
      out.weights.push_back(w);
    }
  }
  return out;
}

SufficientStats e_step(const PhaseTypeLaw& law, std::span<const double> z, std::span<const double> weights,
                       const ComputeOptions& options) {
  check_observations(z, weights);
  const WeightedSample sample = aggregate(z, weights);
  const int p = law.phases();
  const std::size_t n = sample.values.size();
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, options.threads)), 1, n);

  std::vector<SufficientStats> partial(workers, zero_stats(p));
  try {
    accumulate_parallel(law, sample, options.tol, partial);
  } catch (const LikelihoodUnderflowError& e) {
    const double bad = sample.values[e.index()];
    const auto it = std::find(z.begin(), z.end(), bad);
    throw LikelihoodUnderflowError(static_cast<std::size_t>(it - z.begin()), e.what());
  }
  SufficientStats total = zero_stats(p);
  for (const auto& s : partial) {
    total.starts += s.starts;
    total.sojourn += s.sojourn;
    total.jumps += s.jumps;
    total.exits += s.exits;
    total.total_weight += s.total_weight;
  }
  return total;
}

PhaseTypeLaw m_step(const SufficientStats& stats, const MarkovStructure& structure) {
  check_structure(structure);
  const int p = structure.p;
  if (stats.starts.size() != p || stats.sojourn.size() != p || stats.exits.size() != p ||
      stats.jumps.rows() != p || stats.jumps.cols() != p)
    throw DimensionError("m_step: statistics do not match the structure dimension");
  if (!(stats.total_weight > 0.0)) throw DomainError("m_step: statistics carry no observations");
  for (int k = 0; k < p; ++k) {
    if (!(stats.sojourn(k) > 0.0) || !std::isfinite(stats.sojourn(k)))
      throw DegenerateStateError(static_cast<std::size_t>(k),
                                 "m_step: state " + std::to_string(k) + " has zero expected sojourn time");
  }

  Vector pi = Vector::Zero(p);
  for (int k = 0; k < p; ++k)
    if (structure.allows_start(k)) pi(k) = stats.starts(k);
  if (structure.kind == StructureKind::Exponential || structure.kind == StructureKind::Erlang ||
      structure.kind == StructureKind::Coxian) {
    pi.setZero();
    pi(0) = 1.0;
  } else {
    pi /= pi.sum();
  }

  Matrix T = Matrix::Zero(p, p);
  if (structure.kind == StructureKind::Erlang) {
    // Common rate: every jump and the final exit share one intensity.
    double events = stats.exits(p - 1);
    for (int k = 0; k + 1 < p; ++k) events += stats.jumps(k, k + 1);
    const double alpha = events / stats.sojourn.sum();
    for (int k = 0; k < p; ++k) {
      T(k, k) = -alpha;
      if (k + 1 < p) T(k, k + 1) = alpha;
    }
  } else {
    for (int k = 0; k < p; ++k) {
      double out = 0.0;
      for (int s = 0; s < p; ++s) {
        if (structure.allows_jump(k, s)) {
          T(k, s) = stats.jumps(k, s) / stats.sojourn(k);
          out += T(k, s);
        }
      }
      if (structure.allows_exit(k)) out += stats.exits(k) / stats.sojourn(k);
      T(k, k) = -out;
    }
  }
  for (int k = 0; k < p; ++k) {
    if (!(T(k, k) < 0.0))
      throw DegenerateStateError(static_cast<std::size_t>(k),
                                 "m_step: state " + std::to_string(k) + " lost all outgoing intensity");
  }
  return PhaseTypeLaw(pi, T, structure);
}

std::vector<double> ph_log_densities(const PhaseTypeLaw& law, std::span<const double> z, double tol) {
  check_observations(z, {});
  std::vector<double> out(z.size());
  const Vector& t = law.exit();
  const std::span<const double> exit(t.data(), static_cast<std::size_t>(t.size()));
  matexp::propagate_rows(law.T(), law.pi(), z, tol, [&](std::size_t i, const matexp::RowPropagator& prop) {
    const double d = prop.dot(exit);
    out[i] = d > 0.0 ? prop.log_scale() + std::log(d) : -std::numeric_limits<double>::infinity();
  });
  return out;
}

double ph_loglik(const PhaseTypeLaw& law, std::span<const double> z, std::span<const double> weights, double tol) {
  check_observations(z, weights);
  const WeightedSample sample = aggregate(z, weights);
  const std::vector<double> terms = ph_log_densities(law, sample.values, tol);
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (!std::isfinite(terms[i])) {
      // report the original index of the offending value
      const auto it = std::find(z.begin(), z.end(), sample.values[i]);
      throw LikelihoodUnderflowError(static_cast<std::size_t>(it - z.begin()),
                                     "ph_loglik: density underflow at z = " + std::to_string(sample.values[i]));
    }
    total += sample.weights[i] * terms[i];
  }
  return total;
}

EmResult fit_ph(const PhaseTypeLaw& start, std::span<const double> z, std::span<const double> weights,
                const EmOptions& options) {
  check_observations(z, weights);
  const WeightedSample sample = aggregate(z, weights);
  EmResult result{start, {}, 0, false};
  double current = ph_loglik(start, sample.values, sample.weights, options.compute.tol);
  result.trace.push_back(current);
  for (int it = 0; it < options.max_iter; ++it) {
    const SufficientStats stats = e_step(result.law, sample.values, sample.weights, options.compute);
    result.law = m_step(stats, result.law.structure());
    const double next = ph_loglik(result.law, sample.values, sample.weights, options.compute.tol);
    result.trace.push_back(next);
    result.iterations = it + 1;
    const bool small = std::abs(next - current) <= options.stop_tol * std::abs(current);
    current = next;
    if (small) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace phreg
