#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cpbo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr std::size_t kNumSlip = 12;
inline constexpr std::size_t kNumParams = 9;

using SlipArray = std::array<double, kNumSlip>;
using ParamVector = std::array<double, kNumParams>;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that violates an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent file content.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpbo
