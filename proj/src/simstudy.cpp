#include "phreg/simstudy.hpp"

#include "phreg/error.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace phreg {

void SynthConfig::validate() const {
  if (n < 1) throw DomainError("SynthConfig: n must be positive");
  if (!(rho > -1.0 && rho < 1.0)) throw DomainError("SynthConfig: rho must lie in (-1, 1)");
  double sum = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0)) throw DomainError("SynthConfig: probabilities must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw DomainError("SynthConfig: probabilities must sum to 1");
  if (!(dispersion > 0.0) || !std::isfinite(dispersion)) throw DomainError("SynthConfig: dispersion must be positive");
}

SynthSample generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  std::discrete_distribution<int> component(config.probabilities.begin(), config.probabilities.end());
  const double shape = 1.0 / config.dispersion;
  const double mix = std::sqrt(1.0 - config.rho * config.rho);
  auto phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };

  SynthSample out;
  out.data.y.resize(static_cast<Eigen::Index>(config.n));
  out.data.X.resize(static_cast<Eigen::Index>(config.n), 2);
  out.data.names = {"X1", "X2"};
  out.labels.resize(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double w1 = normal(rng);
    const double w2 = config.rho * w1 + mix * normal(rng);
    const double x1 = phi(w1);
    out.data.X(r, 0) = x1;
    out.data.X(r, 1) = phi(w2);
    const int k = component(rng);
    out.labels[i] = k;
    const double mean = std::exp(config.intercepts[static_cast<std::size_t>(k)] + x1);
    std::gamma_distribution<double> gamma(shape, mean * config.dispersion);
    const double g = gamma(rng);
    out.data.y(r) = k == 2 ? std::exp(g) : g;
  }
  return out;
}

GammaGlmFit fit_gamma_glm(const Dataset& data, int max_iter, double tol) {
  data.validate();
  const Eigen::Index n = data.y.size();
  const Eigen::Index k = data.covariates() + 1;
  if (n <= k) throw DimensionError("fit_gamma_glm: not enough observations");
  Matrix D(n, k);
  D.col(0).setOnes();
  if (k > 1) D.rightCols(k - 1) = data.X;

  GammaGlmFit out;
  out.names.push_back("(Intercept)");
  for (Eigen::Index j = 0; j + 1 < k; ++j)
    out.names.push_back(static_cast<std::size_t>(j) < data.names.size() ? data.names[static_cast<std::size_t>(j)]
                                                                        : "x" + std::to_string(j + 1));
  Vector beta = Vector::Zero(k);
  beta(0) = std::log(data.y.mean());
  const auto qr = D.colPivHouseholderQr();
  auto deviance = [&](const Vector& mu) {
    return 2.0 * ((data.y.array() - mu.array()) / mu.array() - (data.y.array() / mu.array()).log()).sum();
  };
  Vector mu = (D * beta).array().exp();
  double dev = deviance(mu);
  // Log link with Gamma variance: unit working weights, working response eta + (y - mu) / mu.
  for (int it = 0; it < max_iter; ++it) {
    const Vector work = D * beta + ((data.y - mu).array() / mu.array()).matrix();
    const Vector next_beta = qr.solve(work);
    const double moved = (next_beta - beta).cwiseAbs().maxCoeff();
    beta = next_beta;
    mu = (D * beta).array().exp();
    const double next = deviance(mu);
    out.iterations = it + 1;
    const bool small = std::abs(next - dev) <= tol * (std::abs(next) + 0.1) &&
                       moved <= 1e-10 * (1.0 + beta.cwiseAbs().maxCoeff());
    dev = next;
    if (small) {
      out.converged = true;
      break;
    }
  }
  if (!beta.allFinite()) throw NumericDomainError("fit_gamma_glm: IRLS diverged");
  out.coefficients = beta;

  const Vector pearson = (data.y - mu).array() / mu.array();
  out.dispersion = pearson.squaredNorm() / static_cast<double>(n - k);
  const Matrix xtx_inv = (D.transpose() * D).ldlt().solve(Matrix::Identity(k, k));
  out.standard_errors = (out.dispersion * xtx_inv.diagonal().array()).sqrt();
  const boost::math::students_t tdist(static_cast<double>(n - k));
  out.p_values.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double t = std::abs(out.coefficients(j) / out.standard_errors(j));
    out.p_values(j) = std::isfinite(t) ? 2.0 * boost::math::cdf(boost::math::complement(tdist, t)) : 0.0;
  }

  // Shape by maximum likelihood: log(nu) - digamma(nu) = mean(y/mu - 1 - log(y/mu)).
  const double target = dev / (2.0 * static_cast<double>(n));
  double log_nu = -std::log(2.0 * std::max(target, 1e-300));
  for (int it = 0; it < 200; ++it) {
    const double nu = std::exp(log_nu);
    const double f = std::log(nu) - boost::math::digamma(nu) - target;
    const double df = (1.0 / nu - boost::math::trigamma(nu)) * nu;
    const double step = f / df;
    log_nu -= std::clamp(step, -2.0, 2.0);
    if (std::abs(step) < 1e-14) break;
  }
  const double nu = std::exp(log_nu);
  out.shape = nu;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = data.y(i);
    ll += nu * std::log(nu / mu(i)) + (nu - 1.0) * std::log(y) - nu * y / mu(i) - std::lgamma(nu);
  }
  out.loglik = ll;
  out.df = static_cast<int>(k) + 1;
  const auto ic = aic_bic(ll, out.df, static_cast<std::size_t>(n));
  out.aic = ic.aic;
  out.bic = ic.bic;
  return out;
}

std::string_view to_string(StudyModel model) {
  switch (model) {
    case StudyModel::GammaGlmX1: return "gamma-glm-x1";
    case StudyModel::GammaGlmX1X2: return "gamma-glm-x1x2";
    case StudyModel::ParetoCoxian3X1: return "m-pareto3-x1";
    case StudyModel::ParetoCoxian3X1X2: return "m-pareto3-x1x2";
  }
  return "";
}

StudyModel parse_study_model(std::string_view name) {
  for (StudyModel m : kAllStudyModels)
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown study model '" + std::string(name) + "'");
}

Dataset select_covariates(const Dataset& data, const std::vector<std::string>& names) {
  Dataset out;
  out.y = data.y;
  out.X.resize(data.y.size(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto it = std::find(data.names.begin(), data.names.end(), names[j]);
    if (it == data.names.end()) throw DimensionError("no covariate named '" + names[j] + "'");
    out.X.col(static_cast<Eigen::Index>(j)) = data.X.col(it - data.names.begin());
  }
  out.names = names;
  return out;
}

StudyRow run_model(const Dataset& data, StudyModel model, const StudyOptions& options) {
  StudyRow row;
  row.model = model;
  const bool both = model == StudyModel::GammaGlmX1X2 || model == StudyModel::ParetoCoxian3X1X2;
  const Dataset sub = select_covariates(data, both ? std::vector<std::string>{"X1", "X2"} : std::vector<std::string>{"X1"});
  try {
    if (model == StudyModel::GammaGlmX1 || model == StudyModel::GammaGlmX1X2) {
      const GammaGlmFit glm = fit_gamma_glm(sub);
      row.loglik = glm.loglik;
      row.df = glm.df;
      row.aic = glm.aic;
      row.bic = glm.bic;
      row.names = glm.names;
      row.estimates = glm.coefficients;
      row.standard_errors = glm.standard_errors;
      row.p_values = glm.p_values;
      row.iterations = glm.iterations;
      row.converged = glm.converged;
    } else {
      FitConfig config;
      config.structure = {StructureKind::Coxian, 3};
      config.family = TransformFamily::Pareto;
      config.seed = options.fit_seed;
      config.stop_tol = options.stop_tol;
      config.max_iter = options.max_iter;
      config.threads = options.threads;
      const FitResult res = fit(sub, config);
      ComputeOptions compute;
      compute.threads = options.threads;
      const InferenceReport rep = wald_report(res.model, sub, options.source, res.report.converged, compute);
      row.loglik = res.report.loglik;
      row.df = res.report.df;
      row.aic = res.report.aic;
      row.bic = res.report.bic;
      row.names = rep.names;
      row.estimates = rep.estimates;
      row.standard_errors = rep.standard_errors;
      row.p_values = rep.p_values;
      row.iterations = res.report.iterations;
      row.converged = res.report.converged;
    }
    row.ok = true;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

std::vector<StudyRow> run_study(const SynthConfig& config, const std::vector<StudyModel>& models,
                                const StudyOptions& options) {
  const SynthSample sample = generate(config);
  std::vector<StudyRow> rows;
  rows.reserve(models.size());
  for (StudyModel m : models) rows.push_back(run_model(sample.data, m, options));
  return rows;
}

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
  const auto old_precision = out.precision(17);
  out << "model,status,loglik,df,aic,bic,iterations,converged,term,estimate,se,p_value\n";
  for (const auto& r : rows) {
    const std::string head = std::string(to_string(r.model)) + "," + (r.ok ? "ok" : "error");
    if (!r.ok) {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << head << ",,,,,,," << msg << ",,,\n";
      continue;
    }
    for (std::size_t j = 0; j < r.names.size(); ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      out << head << ',' << r.loglik << ',' << r.df << ',' << r.aic << ',' << r.bic << ',' << r.iterations << ','
          << (r.converged ? "true" : "false") << ',' << r.names[j] << ',' << r.estimates(c) << ','
          << r.standard_errors(c) << ',' << r.p_values(c) << '\n';
    }
  }
  out.precision(old_precision);
}

}  // namespace phreg
