#pragma once

// Phase-type regression: Y | x has intensity m(x^T beta) * lambda(y; theta) * T, so
//
//   Z = m(x^T beta) * g^{-1}(Y; theta)  ~  PH(pi, T).
//
// The fitter alternates EM updates of (pi, T) on the transformed data with a
// derivative-free maximisation over (theta, beta).

#include "phreg/emfit.hpp"
#include "phreg/phase.hpp"
#include "phreg/transform.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace phreg {

// Positive link m. Custom links without a derivative can be fitted but not differentiated.
class Link {
 public:
  enum class Kind { Exp, Softplus, Custom };

  Link() = default;  // exp
  static Link exp() { return Link(); }
  static Link softplus();
  static Link custom(std::string name, std::function<double(double)> value,
                     std::function<double(double)> derivative = {});

  double operator()(double eta) const;
  double derivative(double eta) const;  // UnsupportedError when not differentiable
  bool differentiable() const noexcept;

  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }

 private:
  Kind kind_ = Kind::Exp;
  std::string name_ = "exp";
  std::function<double(double)> value_;
  std::function<double(double)> derivative_;
};

// "exp" or "softplus"; custom links cannot be named on the command line.
Link parse_link(std::string_view name);

struct Dataset {
  Vector y;
  Matrix X;  // N x d, no intercept column
  std::vector<std::string> names;

  std::size_t size() const noexcept { return static_cast<std::size_t>(y.size()); }
  int covariates() const noexcept { return static_cast<int>(X.cols()); }
  // Throws DimensionError / DomainError / NumericDomainError naming the offending entry.
  void validate() const;
};

struct RegressionModel {
  PhaseTypeLaw law;
  Transform transform;
  Vector beta;
  Link link;

  int covariates() const noexcept { return static_cast<int>(beta.size()); }
  // (beta, theta) in that order; theta absent for the identity transform.
  Vector inference_parameters() const;
  RegressionModel with_inference_parameters(const Vector& params) const;
};

// Per-observation ingredients shared by the likelihood, score and residuals.
struct ObservationTerms {
  std::vector<double> m;             // m(x_i^T beta)
  std::vector<double> h;             // g^{-1}(y_i)
  std::vector<double> z;             // m_i * h_i
  std::vector<double> log_kernel;    // log(pi^T e^{T z_i} t), -inf on underflow
  std::vector<double> log_survival;  // log(pi^T e^{T z_i} e)
  std::vector<double> drift;         // (pi^T e^{T z_i} T t) / (pi^T e^{T z_i} t)
};

ObservationTerms observation_terms(const RegressionModel& model, const Dataset& data,
                                   const ComputeOptions& options = {});

// z_i = g^{-1}(y_i; theta) * m(x_i^T beta). Throws NumericDomainError naming the first
// observation whose linear predictor overflows (or underflows) the link.
std::vector<double> transform_data(const RegressionModel& model, const Dataset& data);

// Sum of log f(y_i | x_i). Throws LikelihoodUnderflowError for a zero contribution.
double regression_loglik(const RegressionModel& model, const Dataset& data,
                         const ComputeOptions& options = {});

// Free parameters of (pi, T) + |theta| + d.
int degrees_of_freedom(const MarkovStructure& structure, TransformFamily family, int covariates);

struct InnerOptions {
  int max_evaluations = 200;
  double f_tolerance = 1e-10;
  std::optional<Vector> steps;  // initial simplex steps in (beta, unconstrained theta)
  ComputeOptions compute;
};

struct InnerResult {
  Transform transform;
  Vector beta;
  double loglik = 0.0;
  double start_loglik = 0.0;
  int evaluations = 0;
  bool improved = false;
};

// Maximises the log-likelihood over (theta, beta) with (pi, T) held fixed. Never
// returns a point worse than the start.
InnerResult inner_maximize(const RegressionModel& start, const Dataset& data, const InnerOptions& options = {});

struct FitConfig {
  MarkovStructure structure{StructureKind::Coxian, 3};
  TransformFamily family = TransformFamily::Pareto;
  Link link;
  std::uint64_t seed = 1;
  double stop_tol = 1e-8;
  int max_iter = 5000;
  int max_inner_evaluations = 200;
  double kernel_tol = 0.0;  // 0 selects min(1e-12, stop_tol / 100)
  int threads = 1;
};

struct FitReport {
  std::vector<double> trace;  // trace[0] is the starting log-likelihood
  int iterations = 0;
  bool converged = false;
  double loglik = 0.0;
  int df = 0;
  double aic = 0.0;
  double bic = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  int inner_fallbacks = 0;  // outer iterations in which (theta, beta) could not be improved
};

struct FitResult {
  RegressionModel model;
  FitReport report;
};

// Random structured start (seeded), beta = 0, theta from the median response.
RegressionModel initial_model(const Dataset& data, const FitConfig& config);

FitResult fit(const Dataset& data, const FitConfig& config = {});
// Same algorithm from a given starting model.
FitResult fit_from(const RegressionModel& start, const Dataset& data, const FitConfig& config = {});

// E[Y | x] by quadrature of the conditional survival function. Throws
// InfiniteMeanError for Pareto fits whose conditional tail index is >= 1.
double conditional_mean(const RegressionModel& model, const Vector& x, double quad_tol = 1e-10);

// Closed form Gamma(1 + 1/theta) pi^T (-T)^{-1/theta} e / m^{1/theta} for the Weibull family.
double weibull_mean(const RegressionModel& model, const Vector& x);

// Conditional survival S(y | x), computed in log space.
double conditional_log_survival(const RegressionModel& model, const Vector& x, double y,
                                double tol = matexp::kDefaultTol);

double predict_quantile(const RegressionModel& model, const Vector& x, double q);

}  // namespace phreg
