#include "phreg/regression.hpp"

#include "phreg/error.hpp"
#include "phreg/optim.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <span>

namespace phreg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double linear_predictor(const Dataset& data, const Vector& beta, std::size_t i) {
  if (beta.size() == 0) return 0.0;
  return data.X.row(static_cast<Eigen::Index>(i)).dot(beta);
}

void check_compatible(const RegressionModel& model, const Dataset& data) {
  data.validate();
  if (model.beta.size() != data.covariates())
    throw DimensionError("model has " + std::to_string(model.beta.size()) + " coefficients but the data has " +
                         std::to_string(data.covariates()) + " covariates");
}

double log_g_derivative(const Transform& tr, double z) {
  const double th = tr.parameter();
  switch (tr.family()) {
    case TransformFamily::Identity: return 0.0;
    case TransformFamily::Pareto: return std::log(th) + z;
    case TransformFamily::Weibull: return (1.0 / th - 1.0) * std::log(z) - std::log(th);
    case TransformFamily::LogNormal:
      return std::pow(z, 1.0 / th) + (1.0 / th - 1.0) * std::log(z) - std::log(th);
    case TransformFamily::Gompertz: return -std::log1p(th * z);
  }
  return 0.0;
}

// log pi^T exp(T z) e, without underflow.
double log_survival_z(const PhaseTypeLaw& law, double z, double tol) {
  if (z <= 0.0) return 0.0;
  if (std::isinf(z)) return kNegInf;
  return matexp::row_exponential(law.T(), law.pi(), z, tol).log_scale;
}

Vector pack(const Vector& beta, const Transform& tr) {
  Vector u(beta.size() + tr.parameter_count());
  u.head(beta.size()) = beta;
  if (tr.parameter_count() == 1) u(beta.size()) = tr.unconstrained();
  return u;
}

double link_value(const RegressionModel& model, const Vector& x) {
  if (x.size() != model.beta.size())
    throw DimensionError("covariate row has " + std::to_string(x.size()) + " entries, model expects " +
                         std::to_string(model.beta.size()));
  if (!x.allFinite()) throw NumericDomainError("covariate row contains non-finite values");
  const double m = model.link(model.beta.size() ? x.dot(model.beta) : 0.0);
  if (!(m > 0.0) || !std::isfinite(m)) throw NumericDomainError("link value is not a positive finite number");
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Link

Link Link::softplus() {
  Link l;
  l.kind_ = Kind::Softplus;
  l.name_ = "softplus";
  return l;
}

Link Link::custom(std::string name, std::function<double(double)> value, std::function<double(double)> derivative) {
  if (!value) throw std::invalid_argument("custom link needs a value function");
  Link l;
  l.kind_ = Kind::Custom;
  l.name_ = std::move(name);
  l.value_ = std::move(value);
  l.derivative_ = std::move(derivative);
  return l;
}

double Link::operator()(double eta) const {
  switch (kind_) {
    case Kind::Exp: return std::exp(eta);
    case Kind::Softplus: return eta > 30.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    case Kind::Custom: return value_(eta);
  }
  return 0.0;
}

double Link::derivative(double eta) const {
  switch (kind_) {
    case Kind::Exp: return std::exp(eta);
    case Kind::Softplus: return 1.0 / (1.0 + std::exp(-eta));
    case Kind::Custom:
      if (!derivative_) throw UnsupportedError("link '" + name_ + "' has no derivative");
      return derivative_(eta);
  }
  return 0.0;
}

bool Link::differentiable() const noexcept { return kind_ != Kind::Custom || static_cast<bool>(derivative_); }

Link parse_link(std::string_view name) {
  if (name == "exp") return Link::exp();
  if (name == "softplus") return Link::softplus();
  throw std::invalid_argument("unknown link '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Dataset / model

void Dataset::validate() const {
  const auto n = y.size();
  if (n < 1) throw DimensionError("dataset has no observations");
  if (X.cols() > 0 && X.rows() != n)
    throw DimensionError("covariate matrix has " + std::to_string(X.rows()) + " rows for " + std::to_string(n) +
                         " responses");
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != X.cols())
    throw DimensionError("covariate names do not match the number of columns");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(y(i))) throw NumericDomainError("response in row " + std::to_string(i) + " is not finite");
    if (!(y(i) > 0.0)) throw DomainError("response in row " + std::to_string(i) + " is not positive");
  }
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      if (!std::isfinite(X(i, j)))
        throw NumericDomainError("covariate " + (names.empty() ? std::to_string(j) : names[j]) + " in row " +
                                 std::to_string(i) + " is not finite");
}

Vector RegressionModel::inference_parameters() const {
  Vector out(beta.size() + transform.parameter_count());
  out.head(beta.size()) = beta;
  if (transform.parameter_count() == 1) out(beta.size()) = transform.parameter();
  return out;
}

RegressionModel RegressionModel::with_inference_parameters(const Vector& params) const {
  if (params.size() != beta.size() + transform.parameter_count())
    throw DimensionError("parameter vector has the wrong length");
  RegressionModel out = *this;
  out.beta = params.head(beta.size());
  if (transform.parameter_count() == 1) out.transform = transform.with_parameter(params(beta.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood

std::vector<double> transform_data(const RegressionModel& model, const Dataset& data) {
  check_compatible(model, data);
  std::vector<double> z(data.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double m = model.link(linear_predictor(data, model.beta, i));
    const double h = model.transform.g_inverse(data.y(static_cast<Eigen::Index>(i)));
    z[i] = m * h;
    if (!std::isfinite(z[i]) || !(z[i] > 0.0))
      throw NumericDomainError("transformed observation " + std::to_string(i) +
                               " is not a positive finite number (link overflow or underflow)");
  }
  return z;
}

ObservationTerms observation_terms(const RegressionModel& model, const Dataset& data, const ComputeOptions& options) {
  check_compatible(model, data);
  const std::size_t n = data.size();
  ObservationTerms out;
  out.m.resize(n);
  out.h.resize(n);
  out.z.resize(n);
  out.log_kernel.resize(n);
  out.log_survival.resize(n);
  out.drift.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.m[i] = model.link(linear_predictor(data, model.beta, i));
    out.h[i] = model.transform.g_inverse(data.y(static_cast<Eigen::Index>(i)));
    out.z[i] = out.m[i] * out.h[i];
    if (!std::isfinite(out.z[i]) || !(out.z[i] > 0.0))
      throw NumericDomainError("transformed observation " + std::to_string(i) +
                               " is not a positive finite number (link overflow or underflow)");
  }
  const Vector& t = model.law.exit();
  const Vector Tt = model.law.T() * t;
  const std::span<const double> exit(t.data(), static_cast<std::size_t>(t.size()));
  const std::span<const double> tt(Tt.data(), static_cast<std::size_t>(Tt.size()));
  matexp::propagate_rows(model.law.T(), model.law.pi(), out.z, options.tol, options.threads,
                         [&](std::size_t i, const matexp::RowPropagator& prop) {
                           const double k = prop.dot(exit);
                           out.log_survival[i] = prop.log_scale();
                           out.log_kernel[i] = k > 0.0 ? prop.log_scale() + std::log(k) : kNegInf;
                           out.drift[i] = k > 0.0 ? prop.dot(tt) / k : 0.0;
                         });
  return out;
}

double regression_loglik(const RegressionModel& model, const Dataset& data, const ComputeOptions& options) {
  const ObservationTerms terms = observation_terms(model, data, options);
  double total = 0.0;
  for (std::size_t i = 0; i < terms.z.size(); ++i) {
    const double lam = model.transform.intensity(data.y(static_cast<Eigen::Index>(i)));
    const double term = std::log(terms.m[i]) + std::log(lam) + terms.log_kernel[i];
    if (!std::isfinite(term))
      throw LikelihoodUnderflowError(i, "likelihood contribution of observation " + std::to_string(i) +
                                            " is zero in floating point");
    total += term;
  }
  return total;
}

int degrees_of_freedom(const MarkovStructure& structure, TransformFamily family, int covariates) {
  check_structure(structure);
  if (covariates < 0) throw DimensionError("negative number of covariates");
  return structure.free_parameters() + (family == TransformFamily::Identity ? 0 : 1) + covariates;
}

// ---------------------------------------------------------------------------
// Inner maximisation over (theta, beta)

InnerResult inner_maximize(const RegressionModel& start, const Dataset& data, const InnerOptions& options) {
  check_compatible(start, data);
  const Eigen::Index d = start.beta.size();
  const TransformFamily family = start.transform.family();
  const Vector u0 = pack(start.beta, start.transform);

  InnerResult result{start.transform, start.beta, 0.0, 0.0, 0, false};
  result.start_loglik = regression_loglik(start, data, options.compute);
  result.loglik = result.start_loglik;

  RegressionModel trial = start;
  auto objective = [&](const Vector& u) {
    try {
      trial.beta = u.head(d);
      if (u.size() > d) trial.transform = Transform::from_unconstrained(family, u(d));
      return -regression_loglik(trial, data, options.compute);
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Vector steps = Vector::Constant(u0.size(), 0.1);
  if (options.steps) {
    if (options.steps->size() != u0.size()) throw DimensionError("inner_maximize: step vector has the wrong length");
    steps = *options.steps;
  }
  optim::NelderMeadOptions nm;
  nm.max_evaluations = options.max_evaluations;
  nm.f_tolerance = options.f_tolerance;
  nm.x_tolerance = 1e-12;
  const auto best = optim::nelder_mead(objective, u0, steps, nm);
  result.evaluations = best.evaluations;
  if (std::isfinite(best.value) && -best.value > result.start_loglik) {
    result.improved = true;
    result.loglik = -best.value;
    result.beta = best.x.head(d);
    if (best.x.size() > d) result.transform = Transform::from_unconstrained(family, best.x(d));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Algorithm

RegressionModel initial_model(const Dataset& data, const FitConfig& config) {
  data.validate();
  std::vector<double> ys(data.y.data(), data.y.data() + data.y.size());
  const auto mid = ys.begin() + static_cast<std::ptrdiff_t>(ys.size() / 2);
  std::nth_element(ys.begin(), mid, ys.end());
  const Transform tr = Transform::initial(config.family, *mid);
  double scale = 0.0;
  for (Eigen::Index i = 0; i < data.y.size(); ++i) scale += tr.g_inverse(data.y(i));
  scale /= static_cast<double>(data.y.size());
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  return RegressionModel{build_structure(config.structure, config.seed, scale), tr,
                         Vector::Zero(data.covariates()), config.link};
}

FitResult fit(const Dataset& data, const FitConfig& config) { return fit_from(initial_model(data, config), data, config); }

FitResult fit_from(const RegressionModel& start, const Dataset& data, const FitConfig& config) {
  check_compatible(start, data);
  check_structure(config.structure);
  if (config.max_iter < 0) throw std::invalid_argument("max_iter must be nonnegative");
  if (!(config.stop_tol > 0.0)) throw std::invalid_argument("stop_tol must be positive");
  const MarkovStructure structure = start.law.structure();

  ComputeOptions compute;
  compute.tol = config.kernel_tol > 0.0 ? config.kernel_tol : std::min(1e-12, config.stop_tol / 100.0);
  compute.threads = config.threads;

  FitResult out{start, {}};
  FitReport& report = out.report;
  report.n = data.size();
  report.seed = config.seed;

  RegressionModel model = start;
  double current = regression_loglik(model, data, compute);
  report.trace.push_back(current);
  double best = current;

  std::optional<Vector> steps;
  for (int it = 0; it < config.max_iter; ++it) {
    const std::vector<double> z = transform_data(model, data);
    const SufficientStats stats = e_step(model.law, z, {}, compute);
    model.law = m_step(stats, structure);

    InnerOptions inner;
    inner.max_evaluations = config.max_inner_evaluations;
    inner.f_tolerance = std::max(1e-12, 1e-3 * config.stop_tol * (1.0 + std::abs(current)));
    inner.steps = steps;
    inner.compute = compute;
    const Vector before = pack(model.beta, model.transform);
    const InnerResult res = inner_maximize(model, data, inner);
    if (res.improved) {
      model.beta = res.beta;
      model.transform = res.transform;
    } else {
      ++report.inner_fallbacks;
    }
    const Vector after = pack(model.beta, model.transform);
    Vector next_steps(after.size());
    for (Eigen::Index j = 0; j < after.size(); ++j) {
      const double floor = 1e-5 * (1.0 + std::abs(after(j)));
      next_steps(j) = std::clamp(2.0 * std::abs(after(j) - before(j)), floor, std::max(floor, 0.1));
    }
    steps = next_steps;

    const double next = res.loglik;
    report.trace.push_back(next);
    report.iterations = it + 1;
    if (next > best) {
      best = next;
      out.model = model;
    }
    const bool small = std::abs(next - current) <= config.stop_tol * std::abs(current);
    current = next;
    if (small) {
      report.converged = true;
      break;
    }
  }
  if (report.iterations == 0) out.model = model;
  report.loglik = std::max(best, report.trace.front());
  report.df = degrees_of_freedom(structure, out.model.transform.family(), out.model.covariates());
  report.aic = -2.0 * report.loglik + 2.0 * report.df;
  report.bic = -2.0 * report.loglik + report.df * std::log(static_cast<double>(report.n));
  return out;
}

// ---------------------------------------------------------------------------
// Prediction

double conditional_log_survival(const RegressionModel& model, const Vector& x, double y, double tol) {
  const double m = link_value(model, x);
  if (std::isnan(y)) throw NumericDomainError("conditional_log_survival: y is NaN");
  if (y <= 0.0) return 0.0;
  if (std::isinf(y)) return kNegInf;
  return log_survival_z(model.law, m * model.transform.g_inverse(y), tol);
}

double conditional_mean(const RegressionModel& model, const Vector& x, double quad_tol) {
  const double m = link_value(model, x);
  const Transform& tr = model.transform;
  if (tr.family() == TransformFamily::Pareto) {
    const double chi = -dominant_eigenvalue(model.law.T());
    if (!(chi * m > 1.0))
      throw InfiniteMeanError("conditional tail index " + std::to_string(1.0 / (chi * m)) +
                              " is not below 1; the conditional mean is infinite");
  }
  if (tr.family() == TransformFamily::Identity) return ph_mean(model.law) / m;
  if (!(quad_tol > 0.0)) throw std::invalid_argument("quad_tol must be positive");

  // E[Y|x] = int_0^inf S_Z(u) g'(u/m) / m du, integrated over doubling segments in u.
  const double log_m = std::log(m);
  auto integrand = [&](double u) {
    if (!(u > 0.0)) return 0.0;
    const double v = log_survival_z(model.law, u, matexp::kDefaultTol) + log_g_derivative(tr, u / m) - log_m;
    return std::isfinite(v) ? std::exp(v) : 0.0;
  };
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double width = ph_mean(model.law);
  double total = 0.0;
  double a = 0.0;
  double b = width;
  int quiet = 0;
  for (int seg = 0; seg < 2000 && quiet < 3; ++seg) {
    const double part = integrator.integrate(integrand, a, b, quad_tol);
    total += part;
    quiet = (part <= 1e-3 * quad_tol * total) ? quiet + 1 : 0;
    a = b;
    b = a + std::min(a, 64.0 * width);
  }
  if (!std::isfinite(total) || !(total > 0.0))
    throw NumericDomainError("conditional_mean: quadrature did not produce a finite positive value");
  return total;
}

double weibull_mean(const RegressionModel& model, const Vector& x) {
  if (model.transform.family() != TransformFamily::Weibull)
    throw UnsupportedError("weibull_mean requires the Weibull transform family");
  const double m = link_value(model, x);
  const double s = 1.0 / model.transform.parameter();
  const Matrix neg = -model.law.T();
  Eigen::MatrixPower<Matrix> power(neg);
  const Matrix frac = power(-s);
  const double value = std::tgamma(1.0 + s) * model.law.pi().dot(frac.rowwise().sum()) / std::pow(m, s);
  if (std::isfinite(value) && value > 0.0) return value;
  std::cerr << "warning: fractional matrix power failed; falling back to quadrature\n";
  return conditional_mean(model, x);
}

double predict_quantile(const RegressionModel& model, const Vector& x, double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  const double m = link_value(model, x);
  const double target = std::log1p(-q);
  auto excess = [&](double y) { return conditional_log_survival(model, x, y) - target; };

  double guess = model.transform.g(ph_mean(model.law) / m);
  if (!std::isfinite(guess) || !(guess > 0.0)) guess = 1.0;
  double lo = guess;
  double hi = guess;
  if (excess(guess) > 0.0) {
    for (int i = 0; i < 4000 && excess(hi) > 0.0; ++i) {
      lo = hi;
      hi *= 2.0;
      if (!std::isfinite(hi)) throw NumericDomainError("predict_quantile: quantile exceeds the double range");
    }
  } else {
    for (int i = 0; i < 4000 && excess(lo) <= 0.0; ++i) {
      hi = lo;
      lo *= 0.5;
      if (!(lo > 0.0)) return hi;
    }
  }
  while (hi / lo - 1.0 > 1e-10) {
    const double mid = std::sqrt(lo * hi);
    if (mid <= lo || mid >= hi) break;
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

}  // namespace phreg
