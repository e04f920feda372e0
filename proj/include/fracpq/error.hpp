#pragma once

#include <stdexcept>
#include <string>

namespace fracpq {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Short machine-readable category, used in CLI error JSON.
  virtual const char* kind() const noexcept { return "error"; }
};

class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain_error"; }
};

class SingularityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "singularity"; }
};

class QuadratureError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "quadrature_failure"; }
};

class MemoryBudgetError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "memory_budget"; }
};

class InvariantError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invariant_violation"; }
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "non_convergence"; }
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& reason)
      : Error(field + ": " + reason), field_(std::move(field)) {}
  const char* kind() const noexcept override { return "config_error"; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace fracpq
