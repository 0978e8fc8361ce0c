#pragma once

// Matrix-exponential kernels for sub-intensity matrices, based on uniformization:
//
//   exp(T y) = sum_n  Pois(n; phi*y) * Q^n,   Q = I + T/phi,  phi = max_k(-t_kk).
//
// The series is truncated at the first order M whose Poisson tail is below the
// requested tolerance; long horizons are handled by scaling and squaring so that
// the Poisson mean of the truncated series never exceeds one.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <numeric>
#include <span>
#include <thread>
#include <utility>
#include <vector>

namespace phreg::matexp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultTol = 1e-12;

struct UniformizationPlan {
  double rate = 0.0;   // phi
  Matrix transition;   // Q = I + T / phi (empty when phi*y == 0)
  int truncation = 0;  // M
  int squarings = 0;   // m
};

// Smallest M with P(Poisson(mean) > M) <= tol. The tail is bounded in log space
// by w_{M+1} / (1 - mean/(M+2)), which is valid once M + 2 > mean.
int poisson_truncation_order(double mean, double tol);

// Throws DimensionError for p = 0 / non-square input, NumericDomainError for
// non-finite entries and DomainError when T is not a sub-intensity matrix.
void check_subintensity(const Matrix& T);

UniformizationPlan plan_uniformization(const Matrix& T, double y, double tol = kDefaultTol);

// exp(T y) with entrywise error <= tol.
Matrix matrix_exponential(const Matrix& T, double y, double tol = kDefaultTol);

// exp(T y) = exp(log_scale) * matrix, with matrix normalised to unit max entry.
// Useful where exp(T y) underflows but ratios of its entries are still needed.
struct ScaledExponential {
  Matrix matrix;
  double log_scale = 0.0;
};
ScaledExponential scaled_exponential(const Matrix& T, double y, double tol = kDefaultTol);

// start^T exp(T y) = exp(log_scale) * row with row summing to one.
struct ScaledRow {
  Vector row;
  double log_scale = 0.0;
};
ScaledRow row_exponential(const Matrix& T, const Vector& start, double y, double tol = kDefaultTol);

struct VanLoanBlocks {
  Matrix exp_ty;    // exp(T y)
  Matrix integral;  // int_0^y exp(T(y-u)) t pi^T exp(T u) du
};

// Upper-right block of exp([[T, t pi^T], [0, T]] y).
VanLoanBlocks van_loan_integral(const Matrix& T, const Vector& exit, const Vector& pi, double y,
                                double tol = kDefaultTol);

// Same blocks, both multiplied by exp(-log_scale).
struct ScaledVanLoan {
  Matrix exp_ty;
  Matrix integral;
  double log_scale = 0.0;
};
ScaledVanLoan van_loan_scaled(const Matrix& T, const Vector& exit, const Vector& pi, double y,
                              double tol = kDefaultTol);

// Propagates a nonnegative row vector v^T exp(T y) forward in y. The row is kept
// normalised to unit sum with the magnitude carried separately as a log, so long
// horizons never underflow. Each advance is split into chunks of Poisson mean <= 1;
// advances with Poisson mean above kLongJump use scaled_exponential instead.
class RowPropagator {
 public:
  RowPropagator(const Matrix& T, const Vector& start, double tol = kDefaultTol);

  void advance_to(double y);

  double position() const noexcept { return position_; }
  double log_scale() const noexcept { return log_scale_; }
  // Normalised row; the actual row is exp(log_scale()) * row().
  std::span<const double> row() const noexcept { return row_; }

  double dot(std::span<const double> v) const noexcept {
    return std::inner_product(row_.begin(), row_.end(), v.begin(), 0.0);
  }

 private:
  static constexpr double kLongJump = 64.0;

  void step(double mu);

  std::size_t p_;
  double rate_;
  double tol_;
  Matrix T_;
  std::vector<double> q_;  // row-major Q
  std::vector<double> row_;
  std::vector<double> term_;
  std::vector<double> next_;
  std::vector<double> acc_;
  double position_ = 0.0;
  double log_scale_ = 0.0;
};

// Visits every z in ascending order, calling fn(index, propagator) with the
// propagator positioned at z[index]. z must be finite and >= 0.
template <class Fn>
void propagate_rows(const Matrix& T, const Vector& start, std::span<const double> z, double tol,
                    Fn&& fn) {
  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z[a] < z[b]; });
  RowPropagator prop(T, start, tol);
  for (std::size_t idx : order) {
    prop.advance_to(z[idx]);
    fn(idx, static_cast<const RowPropagator&>(prop));
  }
}

// Parallel variant: the sorted sequence is cut into `threads` contiguous chunks,
// each walked by its own propagator. fn is called concurrently, but never twice
// for the same index.
template <class Fn>
void propagate_rows(const Matrix& T, const Vector& start, std::span<const double> z, double tol,
                    int threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), std::max<std::size_t>(z.size(), 1));
  if (workers <= 1) {
    propagate_rows(T, start, z, tol, std::forward<Fn>(fn));
    return;
  }
  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z[a] < z[b]; });
  const std::size_t chunk = (order.size() + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        const std::size_t begin = std::min(order.size(), w * chunk);
        const std::size_t end = std::min(order.size(), (w + 1) * chunk);
        if (begin == end) return;
        RowPropagator prop(T, start, tol);
        for (std::size_t k = begin; k < end; ++k) {
          prop.advance_to(z[order[k]]);
          fn(order[k], static_cast<const RowPropagator&>(prop));
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace phreg::matexp
