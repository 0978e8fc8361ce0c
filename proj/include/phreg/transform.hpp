#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace phreg {

enum class TransformFamily { Identity, Pareto, Weibull, LogNormal, Gompertz };

std::string_view to_string(TransformFamily family);
TransformFamily parse_transform_family(std::string_view name);

// Inhomogeneity transform Y = g(Z). Each family is fixed by its inverse
// h(y) = g^{-1}(y) = int_0^y lambda(s) ds:
//
//   Identity   h(y) = y
//   Pareto     h(y) = log(1 + y/eta)            g(z) = eta (e^z - 1)
//   Weibull    h(y) = y^eta                     g(z) = z^{1/eta}
//   LogNormal  h(y) = log(1 + y)^gamma          g(z) = exp(z^{1/gamma}) - 1
//   Gompertz   h(y) = (e^{eta y} - 1) / eta     g(z) = log(eta z + 1) / eta
class Transform {
 public:
  Transform() = default;  // identity

  static Transform identity() { return Transform(); }
  static Transform pareto(double eta) { return Transform(TransformFamily::Pareto, eta); }
  static Transform weibull(double eta) { return Transform(TransformFamily::Weibull, eta); }
  static Transform lognormal(double gamma) { return Transform(TransformFamily::LogNormal, gamma); }
  static Transform gompertz(double eta) { return Transform(TransformFamily::Gompertz, eta); }

  // Throws DomainError when the parameter is outside its family's domain.
  Transform(TransformFamily family, double parameter);

  TransformFamily family() const noexcept { return family_; }
  int parameter_count() const noexcept { return family_ == TransformFamily::Identity ? 0 : 1; }
  double parameter() const noexcept { return theta_; }
  Transform with_parameter(double parameter) const { return {family_, parameter}; }

  double g(double z) const;
  double g_inverse(double y) const;  // h(y)
  double intensity(double y) const;  // lambda(y) = h'(y)
  double g_derivative(double z) const;

  // Derivatives with respect to the family parameter.
  double d_g_inverse(double y) const;
  double d_intensity(double y) const;

  // Maps the parameter to the real line: log(eta) or log(gamma - 1).
  double unconstrained() const;
  static Transform from_unconstrained(TransformFamily family, double u);

  // Default starting value used by the regression fitter.
  static Transform initial(TransformFamily family, double median_response);

 private:
  TransformFamily family_ = TransformFamily::Identity;
  double theta_ = 0.0;
};

}  // namespace phreg
