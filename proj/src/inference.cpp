#include "phreg/inference.hpp"

#include "phreg/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace phreg {

namespace {

double normal_upper_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

std::string theta_name(TransformFamily family) { return family == TransformFamily::LogNormal ? "gamma" : "eta"; }

void check_unit_interval(const std::vector<double>& u) {
  if (u.empty()) throw DimensionError("empty sample");
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!(u[i] >= 0.0 && u[i] <= 1.0)) throw DomainError("value " + std::to_string(i) + " lies outside [0, 1]");
}

double condition_number(const Matrix& A) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(A, Eigen::EigenvaluesOnly);
  const Vector ev = eig.eigenvalues();
  const double hi = ev.cwiseAbs().maxCoeff();
  const double lo = ev.minCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

Matrix score_contributions(const RegressionModel& model, const Dataset& data, const ComputeOptions& options) {
  if (!model.link.differentiable())
    throw UnsupportedError("score requires a differentiable link; '" + model.link.name() + "' has no derivative");
  const ObservationTerms terms = observation_terms(model, data, options);
  const Eigen::Index d = model.beta.size();
  const Eigen::Index k = d + model.transform.parameter_count();
  const Transform& tr = model.transform;
  Matrix G(static_cast<Eigen::Index>(data.size()), k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (!std::isfinite(terms.log_kernel[i]))
      throw LikelihoodUnderflowError(i, "likelihood contribution of observation " + std::to_string(i) +
                                            " is zero in floating point");
    const double eta = d ? data.X.row(r).dot(model.beta) : 0.0;
    const double dm = model.link.derivative(eta);
    const double m = terms.m[i];
    for (Eigen::Index j = 0; j < d; ++j) G(r, j) = data.X(r, j) * dm * (1.0 / m + terms.h[i] * terms.drift[i]);
    if (k > d) {
      const double y = data.y(r);
      G(r, d) = tr.d_intensity(y) / tr.intensity(y) + terms.drift[i] * m * tr.d_g_inverse(y);
    }
  }
  return G;
}

Vector score(const RegressionModel& model, const Dataset& data, const ComputeOptions& options) {
  return score_contributions(model, data, options).colwise().sum().transpose();
}

std::string_view to_string(FisherSource source) {
  return source == FisherSource::OuterProduct ? "outer-product" : "numerical-hessian";
}

FisherSource parse_fisher_source(std::string_view name) {
  if (name == "outer-product") return FisherSource::OuterProduct;
  if (name == "numerical-hessian") return FisherSource::NumericalHessian;
  throw std::invalid_argument("unknown Fisher information source '" + std::string(name) + "'");
}

FisherInformation fisher_information(const RegressionModel& model, const Dataset& data, FisherSource source,
                                     const ComputeOptions& options) {
  FisherInformation out;
  out.source = source;
  if (source == FisherSource::OuterProduct) {
    const Matrix G = score_contributions(model, data, options);
    out.matrix = G.transpose() * G;
  } else {
    const Vector x0 = model.inference_parameters();
    const Eigen::Index k = x0.size();
    Matrix H(k, k);
    if (model.link.differentiable()) {
      // Central differences of the analytic score.
      for (Eigen::Index j = 0; j < k; ++j) {
        const double h = 1e-5 * (1.0 + std::abs(x0(j)));
        Vector up = x0, down = x0;
        up(j) += h;
        down(j) -= h;
        const Vector s_up = score(model.with_inference_parameters(up), data, options);
        const Vector s_down = score(model.with_inference_parameters(down), data, options);
        H.col(j) = (s_up - s_down) / (2.0 * h);
      }
    } else {
      auto f = [&](const Vector& x) { return regression_loglik(model.with_inference_parameters(x), data, options); };
      const double f0 = f(x0);
      for (Eigen::Index j = 0; j < k; ++j) {
        const double hj = 1e-5 * (1.0 + std::abs(x0(j)));
        for (Eigen::Index l = 0; l <= j; ++l) {
          const double hl = 1e-5 * (1.0 + std::abs(x0(l)));
          Vector a = x0;
          if (j == l) {
            Vector b = x0;
            a(j) += hj;
            b(j) -= hj;
            H(j, j) = (f(a) - 2.0 * f0 + f(b)) / (hj * hj);
          } else {
            Vector pp = x0, pm = x0, mp = x0, mm = x0;
            pp(j) += hj, pp(l) += hl;
            pm(j) += hj, pm(l) -= hl;
            mp(j) -= hj, mp(l) += hl;
            mm(j) -= hj, mm(l) -= hl;
            H(j, l) = H(l, j) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * hj * hl);
          }
        }
      }
    }
    out.matrix = -0.5 * (H + H.transpose());
  }
  if (!out.matrix.allFinite()) throw NumericDomainError("fisher_information: non-finite entries");
  out.condition = out.matrix.size() ? condition_number(out.matrix) : 1.0;
  out.near_singular = !(out.condition <= kMaxCondition);
  return out;
}

double wald_p_value(double estimate, double se) {
  if (!(se > 0.0)) return estimate == 0.0 ? 1.0 : 0.0;
  return std::clamp(2.0 * normal_upper_tail(std::abs(estimate / se)), 0.0, 1.0);
}

InferenceReport wald_report(const RegressionModel& model, const Dataset& data, FisherSource source, bool converged,
                            const ComputeOptions& options) {
  const FisherInformation info = fisher_information(model, data, source, options);
  if (info.near_singular) {
    const auto other = source == FisherSource::OuterProduct ? FisherSource::NumericalHessian : FisherSource::OuterProduct;
    throw SingularInformationError("Fisher information (" + std::string(to_string(source)) +
                                   ") is near-singular, condition " + std::to_string(info.condition) + "; try " +
                                   std::string(to_string(other)));
  }
  InferenceReport rep;
  rep.source = source;
  rep.estimates = model.inference_parameters();
  const Eigen::Index k = rep.estimates.size();
  for (Eigen::Index j = 0; j < model.beta.size(); ++j)
    rep.names.push_back(j < static_cast<Eigen::Index>(data.names.size()) ? data.names[static_cast<std::size_t>(j)]
                                                                         : "x" + std::to_string(j + 1));
  if (model.transform.parameter_count()) rep.names.push_back(theta_name(model.transform.family()));

  const Matrix cov = info.matrix.ldlt().solve(Matrix::Identity(k, k));
  rep.standard_errors.resize(k);
  rep.ci_lower.resize(k);
  rep.ci_upper.resize(k);
  rep.p_values.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    rep.standard_errors(j) = std::sqrt(std::max(0.0, cov(j, j)));
    rep.ci_lower(j) = rep.estimates(j) - 1.96 * rep.standard_errors(j);
    rep.ci_upper(j) = rep.estimates(j) + 1.96 * rep.standard_errors(j);
    rep.p_values(j) = wald_p_value(rep.estimates(j), rep.standard_errors(j));
  }
  rep.loglik = regression_loglik(model, data, options);
  rep.n = data.size();
  rep.df = degrees_of_freedom(model.law.structure(), model.transform.family(), model.covariates());
  const auto ic = aic_bic(rep.loglik, rep.df, rep.n);
  rep.aic = ic.aic;
  rep.bic = ic.bic;
  if (!converged) rep.warnings.push_back("model did not converge; standard errors may be unreliable");
  return rep;
}

PitResiduals pit_residuals(const RegressionModel& model, const Dataset& data, const ComputeOptions& options) {
  const ObservationTerms terms = observation_terms(model, data, options);
  PitResiduals out;
  out.values.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = std::exp(terms.log_survival[i]);
    if (!(r >= kSurvivalFloor)) {
      out.values[i] = kSurvivalFloor;
      out.clamped.push_back(i);
    } else {
      out.values[i] = std::min(r, 1.0);
    }
  }
  return out;
}

std::vector<std::pair<double, double>> pp_table(std::vector<double> u) {
  check_unit_interval(u);
  std::sort(u.begin(), u.end());
  std::vector<std::pair<double, double>> out(u.size());
  const double n1 = static_cast<double>(u.size() + 1);
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = {u[i], static_cast<double>(i + 1) / n1};
  return out;
}

double ks_statistic(std::vector<double> u) {
  check_unit_interval(u);
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - u[i]);
    d = std::max(d, u[i] - static_cast<double>(i) / n);
  }
  return d;
}

double ks_pvalue(double statistic, std::size_t n) {
  if (n == 0) throw DimensionError("ks_pvalue: empty sample");
  if (!(statistic >= 0.0)) throw DomainError("ks_pvalue: statistic must be nonnegative");
  const double rn = std::sqrt(static_cast<double>(n));
  const double lambda = (rn + 0.12 + 0.11 / rn) * statistic;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

InformationCriteria aic_bic(double loglik, int df, std::size_t n) {
  if (df < 1) throw DomainError("aic_bic: df must be at least 1");
  if (n < 1) throw DomainError("aic_bic: N must be at least 1");
  return {-2.0 * loglik + 2.0 * df, -2.0 * loglik + df * std::log(static_cast<double>(n))};
}

}  // namespace phreg
