#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace asub {

/// Invalid argument or shape mismatch at an API boundary.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A point lies outside the set on which an operation is defined (e.g. an empty slice).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Non-finite or otherwise unusable numeric value. Carries the offending point when known.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
  NumericError(const std::string& what, Eigen::VectorXd point, long index = -1)
      : std::runtime_error(what), point_(std::move(point)), index_(index) {}

  const Eigen::VectorXd& point() const noexcept { return point_; }
  long index() const noexcept { return index_; }

 private:
  Eigen::VectorXd point_;
  long index_ = -1;
};

class NotImplementedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace asub
