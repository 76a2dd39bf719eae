#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ttsgd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix with the wrong shape handed to an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A drift, diffusion, filter or iterate update produced NaN or Inf.
class NumericBlowup : public Error {
 public:
  NumericBlowup(const std::string& where, std::size_t component, std::size_t step = npos)
      : Error(format(where, component, step)), component_(component), step_(step) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t component() const noexcept { return component_; }
  std::size_t step() const noexcept { return step_; }

  /// Copy with the failing step index attached.
  NumericBlowup at_step(std::size_t step, const std::string& where) const {
    return NumericBlowup(where, component_, step);
  }

 private:
  static std::string format(const std::string& where, std::size_t component, std::size_t step) {
    std::string msg = "non-finite value in " + where + " (component " + std::to_string(component) + ")";
    if (step != npos) msg += " at step " + std::to_string(step);
    return msg;
  }

  std::size_t component_;
  std::size_t step_;
};

/// Model or experiment configuration that cannot be used (singular R, bad keys, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain where a quantity is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Linear system too ill-conditioned to solve reliably.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Data series that cannot be aligned (different time grids, lengths).
class AlignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace ttsgd
