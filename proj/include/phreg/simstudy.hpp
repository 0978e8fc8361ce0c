#pragma once

// Synthetic heterogeneous severity data and the GLM / PH regression comparison harness.

#include "phreg/inference.hpp"
#include "phreg/regression.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace phreg {

// Component k has mean exp(intercept_k + X1); the last component's response is exponentiated.
struct SynthConfig {
  std::size_t n = 1000;
  double rho = 0.7;
  std::array<double, 3> probabilities{0.4, 0.4, 0.2};
  std::array<double, 3> intercepts{0.0, 3.0, -1.0};
  double dispersion = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthSample {
  Dataset data;            // columns X1, X2
  std::vector<int> labels;  // component 0, 1, 2; never passed to fitters
};

SynthSample generate(const SynthConfig& config);

// Gamma GLM with log link and intercept, fitted by iteratively reweighted least squares.
struct GammaGlmFit {
  std::vector<std::string> names;  // "(Intercept)" then covariate names
  Vector coefficients;
  Vector standard_errors;
  Vector p_values;
  double dispersion = 0.0;  // Pearson estimate
  double shape = 0.0;       // maximum likelihood shape, used for the log-likelihood
  double loglik = 0.0;
  int df = 0;
  double aic = 0.0;
  double bic = 0.0;
  int iterations = 0;
  bool converged = false;
};

GammaGlmFit fit_gamma_glm(const Dataset& data, int max_iter = 100, double tol = 1e-12);

enum class StudyModel { GammaGlmX1, GammaGlmX1X2, ParetoCoxian3X1, ParetoCoxian3X1X2 };
std::string_view to_string(StudyModel model);
StudyModel parse_study_model(std::string_view name);
inline constexpr std::array<StudyModel, 4> kAllStudyModels{StudyModel::GammaGlmX1, StudyModel::GammaGlmX1X2,
                                                           StudyModel::ParetoCoxian3X1,
                                                           StudyModel::ParetoCoxian3X1X2};

struct StudyOptions {
  std::uint64_t fit_seed = 1;
  double stop_tol = 1e-8;
  int max_iter = 5000;
  FisherSource source = FisherSource::OuterProduct;
  int threads = 1;
};

struct StudyRow {
  StudyModel model = StudyModel::GammaGlmX1;
  bool ok = false;
  std::string error;
  double loglik = 0.0;
  int df = 0;
  double aic = 0.0;
  double bic = 0.0;
  std::vector<std::string> names;
  Vector estimates;
  Vector standard_errors;
  Vector p_values;
  int iterations = 0;
  bool converged = false;
};

// Keeps only the named covariate columns of a dataset.
Dataset select_covariates(const Dataset& data, const std::vector<std::string>& names);

StudyRow run_model(const Dataset& data, StudyModel model, const StudyOptions& options = {});
std::vector<StudyRow> run_study(const SynthConfig& config, const std::vector<StudyModel>& models,
                                const StudyOptions& options = {});

// One line per (model, coefficient), plus the summary columns repeated.
void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows);

}  // namespace phreg
