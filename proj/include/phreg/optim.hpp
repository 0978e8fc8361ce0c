#pragma once

#include <Eigen/Dense>

#include <functional>

namespace phreg::optim {

struct NelderMeadOptions {
  int max_evaluations = 200;
  double f_tolerance = 1e-10;  // stop when the simplex's value spread is below this
  double x_tolerance = 1e-9;   // ... or its diameter is
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Minimises `objective` from `start`, with the initial simplex spanned by
// start + step_j e_j. Non-finite objective values are treated as +inf.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& start, const Eigen::VectorXd& steps,
                             const NelderMeadOptions& options = {});

}  // namespace phreg::optim
