#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace phreg {

// Shape mismatch or empty objects (p = 0, vector length disagreements).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (y <= 0, q outside (0,1), ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// NaN / inf encountered in an input or produced by an intermediate step.
class NumericDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// (pi, T) does not satisfy the zero pattern of its declared Markov structure.
class StructureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InfiniteMeanError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An EM state received zero expected sojourn time.
class DegenerateStateError : public std::runtime_error {
 public:
  DegenerateStateError(std::size_t state, const std::string& what)
      : std::runtime_error(what), state_(state) {}
  std::size_t state() const noexcept { return state_; }

 private:
  std::size_t state_;
};

// Likelihood contribution of one observation is zero in floating point.
class LikelihoodUnderflowError : public std::runtime_error {
 public:
  LikelihoodUnderflowError(std::size_t index, const std::string& what)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Information matrix too ill-conditioned to invert.
class SingularInformationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace phreg
