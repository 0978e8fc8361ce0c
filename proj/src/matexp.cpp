#include "phreg/matexp.hpp"

#include "phreg/error.hpp"

#include <limits>
#include <string>

namespace phreg::matexp {

namespace {

double uniformization_rate(const Matrix& T) {
  double rate = 0.0;
  for (Eigen::Index k = 0; k < T.rows(); ++k) rate = std::max(rate, -T(k, k));
  return rate;
}

// Truncated Poisson series sum_{n<=M} Pois(n; mu) Q^n by Horner's rule.
Matrix poisson_series(const Matrix& Q, double mu, int order) {
  const Eigen::Index n = Q.rows();
  Matrix P = Matrix::Identity(n, n);
  for (int k = order; k >= 1; --k) {
    Matrix next = (mu / k) * (Q * P);
    next.diagonal().array() += 1.0;
    P.swap(next);
  }
  return std::exp(-mu) * P;
}

}  // namespace

int poisson_truncation_order(double mean, double tol) {
  if (!(tol > 0.0)) throw DomainError("poisson_truncation_order: tol must be positive");
  if (!std::isfinite(mean) || mean < 0.0)
    throw NumericDomainError("poisson_truncation_order: mean must be finite and >= 0");
  if (mean == 0.0) return 0;
  const double log_mean = std::log(mean);
  const double log_tol = std::log(tol);
  // log w_{M+1} = -mean + (M+1) log(mean) - log((M+1)!)
  double log_next = -mean + log_mean;  // M = 0
  for (int order = 0; order < 1000000; ++order) {
    if (order + 2 > mean) {
      const double log_bound = log_next - std::log1p(-mean / (order + 2));
      if (log_bound <= log_tol) return order;
    }
    log_next += log_mean - std::log(static_cast<double>(order + 2));
  }
  throw NumericDomainError("poisson_truncation_order: no truncation order found");
}

void check_subintensity(const Matrix& T) {
  if (T.rows() == 0 || T.cols() == 0) throw DimensionError("sub-intensity matrix is empty");
  if (T.rows() != T.cols()) throw DimensionError("sub-intensity matrix must be square");
  if (!T.allFinite()) throw NumericDomainError("sub-intensity matrix has non-finite entries");
  const double scale = std::max(1.0, uniformization_rate(T));
  for (Eigen::Index i = 0; i < T.rows(); ++i) {
    if (T(i, i) > 0.0) throw DomainError("sub-intensity matrix has a positive diagonal entry");
    for (Eigen::Index j = 0; j < T.cols(); ++j) {
      if (i != j && T(i, j) < 0.0)
        throw DomainError("sub-intensity matrix has a negative off-diagonal entry");
    }
    if (T.row(i).sum() > 1e-10 * scale)
      throw DomainError("sub-intensity matrix row " + std::to_string(i) + " sums above zero");
  }
}

UniformizationPlan plan_uniformization(const Matrix& T, double y, double tol) {
  check_subintensity(T);
  if (!std::isfinite(y) || y < 0.0) throw DomainError("uniformization horizon must be finite and >= 0");
  if (!(tol > 0.0)) throw DomainError("uniformization tolerance must be positive");
  UniformizationPlan plan;
  plan.rate = uniformization_rate(T);
  const double mean = plan.rate * y;
  if (mean == 0.0) return plan;
  plan.transition = T / plan.rate;
  plan.transition.diagonal().array() += 1.0;
  plan.squarings = std::max(0, static_cast<int>(std::ceil(std::log2(mean))));
  const double step_mean = std::ldexp(mean, -plan.squarings);
  const double step_tol = std::ldexp(tol, -plan.squarings);
  // A few extra terms keep entries reachable only through long paths relatively accurate.
  plan.truncation = poisson_truncation_order(step_mean, step_tol) + static_cast<int>(T.rows()) - 1;
  return plan;
}

ScaledExponential scaled_exponential(const Matrix& T, double y, double tol) {
  const UniformizationPlan plan = plan_uniformization(T, y, tol);
  const Eigen::Index n = T.rows();
  ScaledExponential out;
  if (plan.rate * y == 0.0) {
    out.matrix = Matrix::Identity(n, n);
    return out;
  }
  const double step_mean = std::ldexp(plan.rate * y, -plan.squarings);
  out.matrix = poisson_series(plan.transition, step_mean, plan.truncation);
  auto renormalise = [&out] {
    const double peak = out.matrix.maxCoeff();
    out.matrix /= peak;
    out.log_scale += std::log(peak);
  };
  renormalise();
  for (int k = 0; k < plan.squarings; ++k) {
    out.matrix = out.matrix * out.matrix;
    out.log_scale *= 2.0;
    renormalise();
  }
  return out;
}

Matrix matrix_exponential(const Matrix& T, double y, double tol) {
  ScaledExponential s = scaled_exponential(T, y, tol);
  if (s.log_scale == 0.0) return s.matrix;
  return s.matrix * std::exp(s.log_scale);
}

ScaledRow row_exponential(const Matrix& T, const Vector& start, double y, double tol) {
  RowPropagator prop(T, start, tol);
  prop.advance_to(y);
  ScaledRow out;
  out.row = Eigen::Map<const Vector>(prop.row().data(), static_cast<Eigen::Index>(prop.row().size()));
  out.log_scale = prop.log_scale();
  return out;
}

namespace {

Matrix augmented_van_loan(const Matrix& T, const Vector& exit, const Vector& pi) {
  const Eigen::Index p = T.rows();
  if (p == 0 || T.cols() != p) throw DimensionError("van_loan_integral: T must be square and non-empty");
  if (exit.size() != p || pi.size() != p)
    throw DimensionError("van_loan_integral: exit and pi must have the dimension of T");
  if (!exit.allFinite() || !pi.allFinite()) throw NumericDomainError("van_loan_integral: non-finite input");
  const double scale = std::max(1.0, uniformization_rate(T));
  if (((T.rowwise().sum() + exit).cwiseAbs().array() > 1e-10 * scale).any())
    throw DomainError("van_loan_integral: exit vector must equal -T e");
  if ((pi.array() < 0.0).any() || pi.sum() > 1.0 + 1e-10)
    throw DomainError("van_loan_integral: pi must be nonnegative with sum <= 1");
  Matrix A = Matrix::Zero(2 * p, 2 * p);
  A.topLeftCorner(p, p) = T;
  A.topRightCorner(p, p) = exit * pi.transpose();
  A.bottomRightCorner(p, p) = T;
  return A;
}

}  // namespace

ScaledVanLoan van_loan_scaled(const Matrix& T, const Vector& exit, const Vector& pi, double y,
                              double tol) {
  const Eigen::Index p = T.rows();
  const Matrix A = augmented_van_loan(T, exit, pi);
  ScaledExponential s = scaled_exponential(A, y, tol);
  ScaledVanLoan out;
  out.exp_ty = s.matrix.topLeftCorner(p, p);
  out.integral = s.matrix.topRightCorner(p, p);
  out.log_scale = s.log_scale;
  return out;
}

VanLoanBlocks van_loan_integral(const Matrix& T, const Vector& exit, const Vector& pi, double y,
                                double tol) {
  ScaledVanLoan s = van_loan_scaled(T, exit, pi, y, tol);
  const double factor = std::exp(s.log_scale);
  return {s.exp_ty * factor, s.integral * factor};
}

RowPropagator::RowPropagator(const Matrix& T, const Vector& start, double tol)
    : p_(static_cast<std::size_t>(T.rows())), rate_(0.0), tol_(tol), T_(T) {
  check_subintensity(T);
  if (start.size() != T.rows()) throw DimensionError("RowPropagator: start vector has wrong length");
  if (!start.allFinite() || (start.array() < 0.0).any())
    throw DomainError("RowPropagator: start vector must be finite and nonnegative");
  if (!(tol > 0.0)) throw DomainError("RowPropagator: tol must be positive");
  const double mass = start.sum();
  if (!(mass > 0.0)) throw DomainError("RowPropagator: start vector has zero mass");
  rate_ = uniformization_rate(T);
  q_.assign(p_ * p_, 0.0);
  for (std::size_t i = 0; i < p_; ++i) {
    for (std::size_t j = 0; j < p_; ++j) {
      const double t = T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      q_[i * p_ + j] = rate_ > 0.0 ? t / rate_ + (i == j ? 1.0 : 0.0) : (i == j ? 1.0 : 0.0);
    }
  }
  row_.resize(p_);
  for (std::size_t i = 0; i < p_; ++i) row_[i] = start(static_cast<Eigen::Index>(i)) / mass;
  log_scale_ = std::log(mass);
  term_.resize(p_);
  next_.resize(p_);
  acc_.resize(p_);
}

void RowPropagator::advance_to(double y) {
  if (!(y >= position_) || !std::isfinite(y))
    throw DomainError("RowPropagator: positions must be finite and nondecreasing");
  const double total = rate_ * (y - position_);
  if (total > kLongJump) {
    const ScaledExponential e = scaled_exponential(T_, y - position_, tol_);
    const Eigen::Map<const Eigen::RowVectorXd> current(row_.data(), static_cast<Eigen::Index>(p_));
    const Eigen::RowVectorXd moved = current * e.matrix;
    const double mass = moved.sum();
    if (!(mass > 0.0)) {
      log_scale_ = -std::numeric_limits<double>::infinity();
    } else {
      for (std::size_t j = 0; j < p_; ++j) row_[j] = moved(static_cast<Eigen::Index>(j)) / mass;
      log_scale_ += e.log_scale + std::log(mass);
    }
  } else if (total > 0.0) {
    const double chunks = std::max(1.0, std::ceil(total));
    const double mu = total / chunks;
    for (double c = 0; c < chunks; c += 1.0) step(mu);
  }
  position_ = y;
}

void RowPropagator::step(double mu) {
  const double w0 = std::exp(-mu);
  for (std::size_t j = 0; j < p_; ++j) {
    term_[j] = row_[j];
    acc_[j] = w0 * row_[j];
  }
  double weight = w0;
  int extra = static_cast<int>(p_) - 1;
  for (int n = 0;; ++n) {
    const double next_weight = weight * mu / (n + 1);
    const double bound = next_weight / (1.0 - mu / (n + 2));
    if (bound <= tol_) {
      if (extra-- <= 0) break;
    }
    std::fill(next_.begin(), next_.end(), 0.0);
    for (std::size_t i = 0; i < p_; ++i) {
      const double v = term_[i];
      if (v == 0.0) continue;
      const double* qrow = &q_[i * p_];
      for (std::size_t j = 0; j < p_; ++j) next_[j] += v * qrow[j];
    }
    term_.swap(next_);
    weight = next_weight;
    for (std::size_t j = 0; j < p_; ++j) acc_[j] += weight * term_[j];
  }
  double mass = 0.0;
  for (double v : acc_) mass += v;
  for (std::size_t j = 0; j < p_; ++j) row_[j] = acc_[j] / mass;
  log_scale_ += std::log(mass);
}

}  // namespace phreg::matexp
