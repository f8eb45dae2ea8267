#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ntkpinn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sizes of inputs, parameters or residual vectors do not match a binding.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& binding, std::size_t expected, std::size_t got)
      : Error("dimension mismatch for '" + binding + "': expected " + std::to_string(expected) +
              ", got " + std::to_string(got)),
        binding_(binding) {}

  const std::string& binding() const noexcept { return binding_; }

 private:
  std::string binding_;
};

class UnsupportedOrderError : public Error {
 public:
  explicit UnsupportedOrderError(std::size_t order)
      : Error("input-derivative order " + std::to_string(order) + " is not supported (max 2)") {}
};

/// Unknown group names, duplicate groups, malformed layouts.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class LayoutMismatchError : public Error {
 public:
  using Error::Error;
};

/// A kernel block trace was nonpositive so trace-ratio weights are undefined.
class DegenerateKernelError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(std::size_t step)
      : Error("non-finite loss at step " + std::to_string(step)), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ntkpinn
