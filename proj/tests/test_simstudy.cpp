#include "phreg/error.hpp"
#include "phreg/simstudy.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace phreg;

namespace {

double ks_uniform(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) d = std::max({d, (i + 1) / n - v[i], v[i] - i / n});
  return d;
}

std::vector<double> ranks(const Vector& v) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v(a) < v(b); });
  std::vector<double> r(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
  return r;
}

// Gamma GLM with log link by Newton on the quasi log-likelihood sum(-y/mu - log mu).
Vector gamma_newton(const Matrix& D, const Vector& y) {
  Vector b = Vector::Zero(D.cols());
  b(0) = std::log(y.mean());
  for (int it = 0; it < 200; ++it) {
    const Vector r = (y.array() / (D * b).array().exp()).matrix();
    const Vector grad = D.transpose() * (r.array() - 1.0).matrix();
    const Matrix hess = -(D.transpose() * r.asDiagonal() * D);
    Vector step = hess.ldlt().solve(grad);
    const double len = step.norm();
    if (len > 1.0) step /= len;
    b -= step;
    if (len < 1e-14) break;
  }
  return b;
}

}  // namespace

TEST_SUITE("simstudy") {
  TEST_CASE("generator: copula marginals, dependence and components") {
    SynthConfig cfg;
    cfg.n = 20000;
    cfg.seed = 3;
    const SynthSample s = generate(cfg);
    REQUIRE(s.data.size() == cfg.n);
    CHECK(s.data.names == std::vector<std::string>{"X1", "X2"});
    std::vector<double> x1(s.data.X.col(0).data(), s.data.X.col(0).data() + cfg.n);
    std::vector<double> x2(s.data.X.col(1).data(), s.data.X.col(1).data() + cfg.n);
    CHECK(ks_uniform(x1) < 1.63 / std::sqrt(static_cast<double>(cfg.n)));
    CHECK(ks_uniform(x2) < 1.63 / std::sqrt(static_cast<double>(cfg.n)));

    // Spearman correlation of a Gaussian copula: (6 / pi) asin(rho / 2)
    const auto r1 = ranks(s.data.X.col(0)), r2 = ranks(s.data.X.col(1));
    const double mean = (cfg.n - 1) / 2.0;
    double num = 0, den = 0;
    for (std::size_t i = 0; i < cfg.n; ++i) {
      num += (r1[i] - mean) * (r2[i] - mean);
      den += (r1[i] - mean) * (r1[i] - mean);
    }
    CHECK(num / den == doctest::Approx(6.0 / M_PI * std::asin(0.35)).epsilon(0.02));

    std::array<double, 3> counts{};
    std::array<double, 3> scaled{};
    for (std::size_t i = 0; i < cfg.n; ++i) {
      const int k = s.labels[i];
      counts[static_cast<std::size_t>(k)] += 1;
      const double y = s.data.y(static_cast<Eigen::Index>(i));
      CHECK(y > 0.0);
      if (k < 2) scaled[static_cast<std::size_t>(k)] += y / std::exp(cfg.intercepts[static_cast<std::size_t>(k)] + x1[i]);
    }
    for (std::size_t k = 0; k < 3; ++k) CHECK(counts[k] / cfg.n == doctest::Approx(cfg.probabilities[k]).epsilon(0.05));
    CHECK(scaled[0] / counts[0] == doctest::Approx(1.0).epsilon(0.05));
    CHECK(scaled[1] / counts[1] == doctest::Approx(1.0).epsilon(0.05));
  }

  TEST_CASE("generator is deterministic per seed") {
    SynthConfig cfg;
    cfg.n = 200;
    const SynthSample a = generate(cfg), b = generate(cfg);
    CHECK(a.data.y == b.data.y);
    CHECK(a.data.X == b.data.X);
    CHECK(a.labels == b.labels);
    cfg.seed = 2;
    CHECK(generate(cfg).data.y != a.data.y);
    cfg.rho = 1.5;
    CHECK_THROWS(cfg.validate());
    cfg.rho = 0.7;
    cfg.probabilities = {0.5, 0.5, 0.5};
    CHECK_THROWS(generate(cfg));
  }

  TEST_CASE("Gamma GLM agrees with a Newton oracle") {
    SynthConfig cfg;
    cfg.n = 1000;
    cfg.seed = 11;
    const Dataset d = generate(cfg).data;
    const GammaGlmFit glm = fit_gamma_glm(d);
    CHECK(glm.converged);
    Matrix D(d.X.rows(), 3);
    D.col(0).setOnes();
    D.rightCols(2) = d.X;
    const Vector b = gamma_newton(D, d.y);
    CHECK((glm.coefficients - b).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(glm.names == std::vector<std::string>{"(Intercept)", "X1", "X2"});
    CHECK(glm.df == 4);

    const Vector mu = (D * b).array().exp();
    const double n = static_cast<double>(d.size());
    double dev = 0.0, pearson = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      dev += 2.0 * (-std::log(d.y(i) / mu(i)) + (d.y(i) - mu(i)) / mu(i));
      pearson += std::pow((d.y(i) - mu(i)) / mu(i), 2);
    }
    CHECK(glm.dispersion == doctest::Approx(pearson / (n - 3)).epsilon(1e-8));
    const double nu = glm.shape;
    CHECK(std::log(nu) - boost::math::digamma(nu) == doctest::Approx(dev / (2 * n)).epsilon(1e-9));
    double ll = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i)
      ll += nu * std::log(nu) - std::lgamma(nu) + (nu - 1) * std::log(d.y(i)) - nu * std::log(mu(i)) -
            nu * d.y(i) / mu(i);
    CHECK(glm.loglik == doctest::Approx(ll).epsilon(1e-9));
    CHECK(glm.aic == doctest::Approx(-2 * ll + 8).epsilon(1e-9));
    CHECK(glm.bic == doctest::Approx(-2 * ll + 4 * std::log(n)).epsilon(1e-9));

    const Matrix cov = glm.dispersion * (D.transpose() * D).inverse();
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(glm.standard_errors(k) == doctest::Approx(std::sqrt(cov(k, k))).epsilon(1e-6));
  }

  TEST_CASE("Gamma GLM recovers a correctly specified model") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset d;
    d.X.resize(20000, 1);
    d.y.resize(20000);
    for (Eigen::Index i = 0; i < 20000; ++i) {
      d.X(i, 0) = u(rng);
      std::gamma_distribution<double> g(2.0, std::exp(0.5 + 1.5 * d.X(i, 0)) / 2.0);
      d.y(i) = g(rng);
    }
    d.names = {"x"};
    const GammaGlmFit glm = fit_gamma_glm(d);
    CHECK(glm.coefficients(0) == doctest::Approx(0.5).epsilon(0.05));
    CHECK(glm.coefficients(1) == doctest::Approx(1.5).epsilon(0.05));
    CHECK(glm.shape == doctest::Approx(2.0).epsilon(0.05));
    CHECK(glm.dispersion == doctest::Approx(0.5).epsilon(0.05));
    CHECK(glm.p_values(1) < 1e-10);
  }

  TEST_CASE("study rows: degrees of freedom and CSV") {
    SynthConfig cfg;
    cfg.n = 300;
    StudyOptions opt;
    opt.max_iter = 15;
    const auto rows = run_study(cfg, {kAllStudyModels.begin(), kAllStudyModels.end()}, opt);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].df == 3);
    CHECK(rows[1].df == 4);
    CHECK(rows[2].df == 7);
    CHECK(rows[3].df == 8);
    for (const auto& r : rows) CHECK(r.ok);
    CHECK(rows[2].names == std::vector<std::string>{"X1", "eta"});
    CHECK(rows[3].names == std::vector<std::string>{"X1", "X2", "eta"});
    std::ostringstream csv;
    write_study_csv(csv, rows);
    const std::string text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 2 + 3 + 2 + 3);
    CHECK(text.rfind("model,status,loglik", 0) == 0);
    CHECK(parse_study_model("m-pareto3-x1x2") == StudyModel::ParetoCoxian3X1X2);
    CHECK_THROWS(parse_study_model("glm"));
    CHECK_THROWS(select_covariates(generate(cfg).data, {"X3"}));
  }
}
