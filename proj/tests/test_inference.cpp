#include "oracles.hpp"

#include "phreg/error.hpp"
#include "phreg/inference.hpp"

#include <boost/math/distributions/normal.hpp>
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace phreg;

namespace {

Dataset uniform_design(std::size_t n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Dataset data;
  data.X.resize(static_cast<Eigen::Index>(n), d);
  data.y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) data.X(i, j) = u(rng);
    data.y(i) = std::exponential_distribution<double>(1.0)(rng) * (1.0 + u(rng) * u(rng));
  }
  return data;
}

// Y | x drawn from the model by inverting the conditional survival.
Dataset draw_from(const RegressionModel& model, const Matrix& X, std::uint64_t seed) {
  const auto z = sample(model.law, Transform(), static_cast<std::size_t>(X.rows()), seed);
  Dataset d;
  d.X = X;
  d.y.resize(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double m = model.link(X.row(i).dot(model.beta));
    d.y(i) = model.transform.g(z[static_cast<std::size_t>(i)] / m);
  }
  return d;
}

Vector finite_difference_score(const RegressionModel& model, const Dataset& data) {
  const Vector p = model.inference_parameters();
  Vector g(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double h = 1e-5 * (1.0 + std::abs(p(k)));
    Vector up = p, down = p;
    up(k) += h;
    down(k) -= h;
    g(k) = (regression_loglik(model.with_inference_parameters(up), data) -
            regression_loglik(model.with_inference_parameters(down), data)) /
           (2 * h);
  }
  return g;
}

}  // namespace

TEST_SUITE("inference") {
  TEST_CASE("exponential GLM score and information in closed form") {
    Vector pi(1);
    pi << 1.0;
    Matrix T(1, 1);
    T << -1.0;
    const PhaseTypeLaw law(pi, T, {StructureKind::Exponential, 1});
    const Dataset d = uniform_design(80, 2, 4);
    Vector beta(2);
    beta << 0.3, -0.6;
    const RegressionModel model{law, Transform(), beta, Link::exp()};
    Vector expected = Vector::Zero(2);
    Matrix info = Matrix::Zero(2, 2);
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
      const Vector x = d.X.row(i).transpose();
      const double w = std::exp(x.dot(beta)) * d.y(i);
      expected += x * (1.0 - w);
      info += w * x * x.transpose();
    }
    CHECK((score(model, d) - expected).cwiseAbs().maxCoeff() <= 1e-11);
    const FisherInformation hess = fisher_information(model, d, FisherSource::NumericalHessian);
    CHECK((hess.matrix - info).cwiseAbs().maxCoeff() <= 1e-6 * info.cwiseAbs().maxCoeff());
    const Matrix G = score_contributions(model, d);
    const FisherInformation opg = fisher_information(model, d, FisherSource::OuterProduct);
    CHECK((opg.matrix - G.transpose() * G).cwiseAbs().maxCoeff() <= 1e-12 * opg.matrix.cwiseAbs().maxCoeff());
  }

  TEST_CASE("analytic score matches finite differences") {
    std::mt19937_64 rng(101);
    const TransformFamily families[] = {TransformFamily::Pareto, TransformFamily::Weibull, TransformFamily::LogNormal,
                                        TransformFamily::Gompertz, TransformFamily::Identity};
    for (int trial = 0; trial < 25; ++trial) {
      const int p = 1 + trial % 3;
      const PhaseTypeLaw law(oracle::random_probability(p, rng), oracle::random_subintensity(p, rng),
                             {StructureKind::General, p});
      const auto fam = families[trial % 5];
      const Transform tr = fam == TransformFamily::Identity ? Transform()
                           : fam == TransformFamily::LogNormal ? Transform::lognormal(1.8)
                                                               : Transform(fam, 0.9);
      Vector beta(2);
      beta << std::normal_distribution<double>(0, 0.4)(rng), std::normal_distribution<double>(0, 0.4)(rng);
      const Link link = trial % 2 == 0 ? Link::exp() : Link::softplus();
      const RegressionModel model{law, tr, beta, link};
      const Dataset d = uniform_design(40, 2, rng());
      const Vector analytic = score(model, d);
      const Vector numeric = finite_difference_score(model, d);
      for (Eigen::Index k = 0; k < analytic.size(); ++k)
        CHECK(analytic(k) == doctest::Approx(numeric(k)).epsilon(1e-5).scale(1e-6 * d.size()));
      const Matrix G = score_contributions(model, d);
      CHECK((G.colwise().sum().transpose() - analytic).cwiseAbs().maxCoeff() <= 1e-12 * (1 + analytic.norm()));
    }
  }

  TEST_CASE("information matrices are symmetric positive semidefinite") {
    std::mt19937_64 rng(5);
    for (auto source : {FisherSource::OuterProduct, FisherSource::NumericalHessian}) {
      const PhaseTypeLaw law = build_structure({StructureKind::Coxian, 2}, 3, 1.0);
      Vector beta(1);
      beta << 0.4;
      const RegressionModel model{law, Transform::pareto(1.0), beta, Link::exp()};
      const Dataset d = draw_from(model, uniform_design(400, 1, 7).X, 8);
      FitConfig cfg;
      cfg.structure = {StructureKind::Coxian, 2};
      cfg.max_iter = 60;
      const FitResult fitted = fit(d, cfg);
      const FisherInformation fi = fisher_information(fitted.model, d, source);
      CHECK((fi.matrix - fi.matrix.transpose()).cwiseAbs().maxCoeff() == 0.0);
      if (source == FisherSource::OuterProduct)
        CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(fi.matrix).eigenvalues().minCoeff() >= 0.0);
      CHECK(fi.source == source);
      CHECK(std::isfinite(fi.condition));
    }
    CHECK(parse_fisher_source("numerical-hessian") == FisherSource::NumericalHessian);
    CHECK(to_string(FisherSource::OuterProduct) == "outer-product");
    CHECK_THROWS(parse_fisher_source("sandwich"));
  }

  TEST_CASE("non-differentiable links are rejected by the score") {
    const PhaseTypeLaw law = build_structure({StructureKind::Coxian, 2}, 3, 1.0);
    const Link custom = Link::custom("shifted", [](double v) { return std::exp(v) + 0.1; });
    const RegressionModel model{law, Transform::pareto(1.0), Vector::Zero(1), custom};
    const Dataset d = uniform_design(30, 1, 2);
    CHECK_THROWS_AS(score(model, d), UnsupportedError);
    CHECK_NOTHROW(fisher_information(model, d, FisherSource::NumericalHessian));
  }

  TEST_CASE("Wald report arithmetic") {
    CHECK(-1.039 - 1.96 * 0.147 == doctest::Approx(-1.327).epsilon(1e-3));
    CHECK(-1.039 + 1.96 * 0.147 == doctest::Approx(-0.751).epsilon(1e-3));
    const boost::math::normal_distribution<double> nd;
    CHECK(wald_p_value(-1.039, 0.147) ==
          doctest::Approx(2 * boost::math::cdf(nd, -1.039 / 0.147)).epsilon(1e-10));
    CHECK(wald_p_value(0.0, 0.0) == 1.0);
    CHECK(wald_p_value(1.96, 1.0) == doctest::Approx(0.04999579).epsilon(1e-6));

    const PhaseTypeLaw law = build_structure({StructureKind::Coxian, 2}, 3, 1.0);
    Vector beta(2);
    beta << 0.5, -0.5;
    const RegressionModel truth{law, Transform::weibull(1.3), beta, Link::exp()};
    Dataset d = draw_from(truth, uniform_design(500, 2, 1).X, 2);
    d.names = {"age", "dose"};
    const InferenceReport r = wald_report(truth, d);
    CHECK(r.names == std::vector<std::string>{"age", "dose", "eta"});
    for (Eigen::Index k = 0; k < 3; ++k) {
      CHECK(r.ci_lower(k) == doctest::Approx(r.estimates(k) - 1.96 * r.standard_errors(k)).epsilon(1e-14));
      CHECK(r.ci_upper(k) == doctest::Approx(r.estimates(k) + 1.96 * r.standard_errors(k)).epsilon(1e-14));
      CHECK(r.p_values(k) == doctest::Approx(wald_p_value(r.estimates(k), r.standard_errors(k))));
    }
    const Matrix inv = fisher_information(truth, d).matrix.inverse();
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(r.standard_errors(k) == doctest::Approx(std::sqrt(inv(k, k))));
    CHECK(r.df == 3 + 1 + 2);
    CHECK(r.loglik == doctest::Approx(regression_loglik(truth, d)));
    const InferenceReport unconverged = wald_report(truth, d, FisherSource::OuterProduct, false);
    CHECK_FALSE(unconverged.warnings.empty());
  }

  TEST_CASE("collinear covariates give a singular information matrix") {
    const PhaseTypeLaw law = build_structure({StructureKind::Coxian, 2}, 3, 1.0);
    Dataset d = uniform_design(100, 2, 6);
    d.X.col(1) = d.X.col(0);
    const RegressionModel model{law, Transform::pareto(1.0), Vector::Zero(2), Link::exp()};
    const FisherInformation fi = fisher_information(model, d);
    CHECK(fi.near_singular);
    CHECK_THROWS_AS(wald_report(model, d), SingularInformationError);
  }

  TEST_CASE("Kolmogorov-Smirnov statistic and p-value") {
    CHECK(ks_statistic({0.5}) == doctest::Approx(0.5));
    CHECK(ks_statistic({0.1, 0.2, 0.9}) == doctest::Approx(std::max({1.0 / 3 - 0.1, 2.0 / 3 - 0.2, 0.9 - 2.0 / 3})));
    CHECK(ks_statistic({0.25, 0.75}) == doctest::Approx(0.25));
    CHECK_THROWS_AS(ks_statistic({0.5, 1.5}), DomainError);
    CHECK_THROWS_AS(ks_statistic({}), DimensionError);
    // large-sample critical values of the Kolmogorov distribution
    const std::size_t n = 1000000;
    CHECK(ks_pvalue(1.3581 / std::sqrt(static_cast<double>(n)), n) == doctest::Approx(0.05).epsilon(2e-3));
    CHECK(ks_pvalue(1.6276 / std::sqrt(static_cast<double>(n)), n) == doctest::Approx(0.01).epsilon(2e-3));
    CHECK(ks_pvalue(0.0, 10) == doctest::Approx(1.0));
    CHECK(ks_pvalue(1.0, 10) < 1e-6);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int rejections = 0;
    for (int rep = 0; rep < 400; ++rep) {
      std::vector<double> v(200);
      for (auto& x : v) x = u(rng);
      if (ks_pvalue(ks_statistic(v), v.size()) < 0.05) ++rejections;
    }
    CHECK(rejections >= 8);
    CHECK(rejections <= 36);
  }

  TEST_CASE("information criteria") {
    const InformationCriteria ic = aic_bic(-3042.0, 7, 1000);
    CHECK(ic.aic == doctest::Approx(6098.0));
    CHECK(ic.bic == doctest::Approx(6132.35).epsilon(1e-5));
    CHECK_THROWS(aic_bic(-1.0, 0, 10));
  }

  TEST_CASE("PIT residuals, quantile round trip and clamping") {
    Vector pi(2);
    pi << 0.5, 0.5;
    Matrix T(2, 2);
    T << -2, 1, 0, -0.8;
    const PhaseTypeLaw law(pi, T, {StructureKind::General, 2});
    Vector beta(1);
    beta << 0.7;
    const RegressionModel model{law, Transform::pareto(1.5), beta, Link::exp()};
    Dataset d = uniform_design(5, 1, 9);
    const double qs[] = {0.05, 0.3, 0.5, 0.8, 0.999};
    for (Eigen::Index i = 0; i < 5; ++i) d.y(i) = predict_quantile(model, d.X.row(i).transpose(), qs[i]);
    const PitResiduals r = pit_residuals(model, d);
    for (std::size_t i = 0; i < 5; ++i) CHECK(r.values[i] == doctest::Approx(1.0 - qs[i]).epsilon(1e-8));
    CHECK(r.clamped.empty());

    const RegressionModel light{law, Transform(), beta, Link::exp()};
    d.y.setConstant(0.5);
    d.y(2) = 2000.0;
    const PitResiduals c = pit_residuals(light, d);
    REQUIRE(c.clamped.size() == 1);
    CHECK(c.clamped[0] == 2);
    CHECK(c.values[2] == kSurvivalFloor);

    const auto table = pp_table({0.9, 0.1, 0.5});
    REQUIRE(table.size() == 3);
    CHECK(table[0] == std::pair<double, double>{0.1, 0.25});
    CHECK(table[2] == std::pair<double, double>{0.9, 0.75});
  }

  TEST_CASE("PIT of data from the model is uniform") {
    std::mt19937_64 rng(55);
    int passed = 0;
    for (int rep = 0; rep < 10; ++rep) {
      const PhaseTypeLaw law = build_structure({StructureKind::Coxian, 3}, rng(), 1.0);
      Vector beta(2);
      beta << -1.0, 0.5;
      const RegressionModel model{law, Transform::pareto(2.0), beta, Link::exp()};
      const Dataset d = draw_from(model, uniform_design(2000, 2, rng()).X, rng());
      const PitResiduals r = pit_residuals(model, d);
      if (ks_pvalue(ks_statistic(r.values), r.values.size()) > 0.01) ++passed;
    }
    CHECK(passed >= 9);
  }
}
