#include "phreg/transform.hpp"

#include "phreg/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace phreg {

std::string_view to_string(TransformFamily family) {
  switch (family) {
    case TransformFamily::Identity: return "identity";
    case TransformFamily::Pareto: return "pareto";
    case TransformFamily::Weibull: return "weibull";
    case TransformFamily::LogNormal: return "lognormal";
    case TransformFamily::Gompertz: return "gompertz";
  }
  return "identity";
}

TransformFamily parse_transform_family(std::string_view name) {
  if (name == "identity") return TransformFamily::Identity;
  if (name == "pareto") return TransformFamily::Pareto;
  if (name == "weibull") return TransformFamily::Weibull;
  if (name == "lognormal") return TransformFamily::LogNormal;
  if (name == "gompertz") return TransformFamily::Gompertz;
  throw DomainError("unknown transform family '" + std::string(name) + "'");
}

Transform::Transform(TransformFamily family, double parameter) : family_(family), theta_(parameter) {
  if (family == TransformFamily::Identity) {
    theta_ = 0.0;
    return;
  }
  if (!std::isfinite(parameter)) throw NumericDomainError("transform parameter must be finite");
  if (family == TransformFamily::LogNormal) {
    if (!(parameter > 1.0)) throw DomainError("lognormal transform requires gamma > 1");
  } else if (!(parameter > 0.0)) {
    throw DomainError("transform parameter eta must be positive");
  }
}

double Transform::g(double z) const {
  switch (family_) {
    case TransformFamily::Identity: return z;
    case TransformFamily::Pareto: return theta_ * std::expm1(z);
    case TransformFamily::Weibull: return std::pow(z, 1.0 / theta_);
    case TransformFamily::LogNormal: return std::expm1(std::pow(z, 1.0 / theta_));
    case TransformFamily::Gompertz: return std::log1p(theta_ * z) / theta_;
  }
  return z;
}

double Transform::g_inverse(double y) const {
  switch (family_) {
    case TransformFamily::Identity: return y;
    case TransformFamily::Pareto: return std::log1p(y / theta_);
    case TransformFamily::Weibull: return std::pow(y, theta_);
    case TransformFamily::LogNormal: return std::pow(std::log1p(y), theta_);
    case TransformFamily::Gompertz: return std::expm1(theta_ * y) / theta_;
  }
  return y;
}

double Transform::intensity(double y) const {
  switch (family_) {
    case TransformFamily::Identity: return 1.0;
    case TransformFamily::Pareto: return 1.0 / (theta_ + y);
    case TransformFamily::Weibull: return theta_ * std::pow(y, theta_ - 1.0);
    case TransformFamily::LogNormal:
      return theta_ * std::pow(std::log1p(y), theta_ - 1.0) / (1.0 + y);
    case TransformFamily::Gompertz: return std::exp(theta_ * y);
  }
  return 1.0;
}

double Transform::g_derivative(double z) const {
  switch (family_) {
    case TransformFamily::Identity: return 1.0;
    case TransformFamily::Pareto: return theta_ * std::exp(z);
    case TransformFamily::Weibull: return std::pow(z, 1.0 / theta_ - 1.0) / theta_;
    case TransformFamily::LogNormal: {
      const double r = std::pow(z, 1.0 / theta_);
      return std::exp(r) * r / (theta_ * z);
    }
    case TransformFamily::Gompertz: return 1.0 / (theta_ * z + 1.0);
  }
  return 1.0;
}

double Transform::d_g_inverse(double y) const {
  switch (family_) {
    case TransformFamily::Identity: return 0.0;
    case TransformFamily::Pareto: return -y / (theta_ * (theta_ + y));
    case TransformFamily::Weibull: return std::pow(y, theta_) * std::log(y);
    case TransformFamily::LogNormal: {
      const double l = std::log1p(y);
      return std::pow(l, theta_) * std::log(l);
    }
    case TransformFamily::Gompertz: {
      const double a = theta_ * y;
      return (a * std::exp(a) - std::expm1(a)) / (theta_ * theta_);
    }
  }
  return 0.0;
}

double Transform::d_intensity(double y) const {
  switch (family_) {
    case TransformFamily::Identity: return 0.0;
    case TransformFamily::Pareto: return -1.0 / ((theta_ + y) * (theta_ + y));
    case TransformFamily::Weibull:
      return std::pow(y, theta_ - 1.0) * (1.0 + theta_ * std::log(y));
    case TransformFamily::LogNormal: {
      const double l = std::log1p(y);
      return intensity(y) * (1.0 / theta_ + std::log(l));
    }
    case TransformFamily::Gompertz: return y * std::exp(theta_ * y);
  }
  return 0.0;
}

double Transform::unconstrained() const {
  switch (family_) {
    case TransformFamily::Identity: return 0.0;
    case TransformFamily::LogNormal: return std::log(theta_ - 1.0);
    default: return std::log(theta_);
  }
}

Transform Transform::from_unconstrained(TransformFamily family, double u) {
  switch (family) {
    case TransformFamily::Identity: return Transform();
    case TransformFamily::LogNormal: return Transform(family, 1.0 + std::exp(u));
    default: return Transform(family, std::exp(u));
  }
}

Transform Transform::initial(TransformFamily family, double median_response) {
  const double m = median_response > 0.0 && std::isfinite(median_response) ? median_response : 1.0;
  switch (family) {
    case TransformFamily::Identity: return Transform();
    case TransformFamily::Pareto: return pareto(m);
    case TransformFamily::Weibull: return weibull(1.0);
    case TransformFamily::LogNormal: return lognormal(2.0);
    case TransformFamily::Gompertz: return gompertz(0.1 / m);
  }
  return Transform();
}

}  // namespace phreg
