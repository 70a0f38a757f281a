#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dwgf {

/// Mismatched vector or matrix dimensions.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain of an operation (time index, sample count, ...).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Invalid configuration value. The message starts with the offending field path.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite intermediate, failed factorization or singular system.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_size(Eigen::Index actual, Eigen::Index expected,
                         const char *what) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected dimension " +
                     std::to_string(expected) + ", got " +
                     std::to_string(actual));
  }
}

/// Size-checked exact equality (Eigen's operator== asserts on size mismatch).
template <typename A, typename B> bool same(const A &a, const B &b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived> &x) {
  return x.allFinite();
}

} // namespace detail
} // namespace dwgf
