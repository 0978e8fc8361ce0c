#pragma once

// Scores, Fisher information and goodness-of-fit summaries for (beta, theta).
// Parameters are ordered (beta_1, ..., beta_d, theta), theta on its natural scale.

#include "phreg/regression.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace phreg {

// N x (d + |theta|): row i holds (G1(i, 1..d), G2(i)).
Matrix score_contributions(const RegressionModel& model, const Dataset& data, const ComputeOptions& options = {});
Vector score(const RegressionModel& model, const Dataset& data, const ComputeOptions& options = {});

enum class FisherSource { OuterProduct, NumericalHessian };
std::string_view to_string(FisherSource source);
FisherSource parse_fisher_source(std::string_view name);  // "outer-product" | "numerical-hessian"

struct FisherInformation {
  Matrix matrix;
  FisherSource source = FisherSource::OuterProduct;
  double condition = 0.0;  // ratio of extreme eigenvalue magnitudes, inf when singular
  bool near_singular = false;
};

inline constexpr double kMaxCondition = 1e12;

FisherInformation fisher_information(const RegressionModel& model, const Dataset& data,
                                     FisherSource source = FisherSource::OuterProduct,
                                     const ComputeOptions& options = {});

struct InferenceReport {
  std::vector<std::string> names;
  Vector estimates;
  Vector standard_errors;
  Vector ci_lower;
  Vector ci_upper;
  Vector p_values;
  FisherSource source = FisherSource::OuterProduct;
  double loglik = 0.0;
  int df = 0;
  double aic = 0.0;
  double bic = 0.0;
  std::size_t n = 0;
  std::vector<std::string> warnings;
};

// Throws SingularInformationError when the information matrix is near-singular.
InferenceReport wald_report(const RegressionModel& model, const Dataset& data,
                            FisherSource source = FisherSource::OuterProduct, bool converged = true,
                            const ComputeOptions& options = {});

// Two-sided normal p-value of estimate / se.
double wald_p_value(double estimate, double se);

struct PitResiduals {
  std::vector<double> values;        // conditional survival at y_i
  std::vector<std::size_t> clamped;  // indices whose survival underflowed below kSurvivalFloor
};
PitResiduals pit_residuals(const RegressionModel& model, const Dataset& data, const ComputeOptions& options = {});

// Ordered PIT against the uniform order statistic i / (N + 1).
std::vector<std::pair<double, double>> pp_table(std::vector<double> u);

double ks_statistic(std::vector<double> u);
// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
double ks_pvalue(double statistic, std::size_t n);

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
};
InformationCriteria aic_bic(double loglik, int df, std::size_t n);

}  // namespace phreg
