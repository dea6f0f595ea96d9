#pragma once

#include <stdexcept>
#include <string>

namespace ntkbias {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument: bad dimension, count, weight, shape mismatch, non-unit vector.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function (e.g. |t| > 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Request exceeds what an evaluator was built for, or exact arithmetic overflows.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Training loss became NaN or exceeded the divergence threshold.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// A least-squares fit had too few usable points.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range configuration document.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ntkbias
