#pragma once

#include <span>
#include <vector>

#include "cpbo/common.hpp"

namespace cpbo {

/// Axis-aligned search box. `to_unit` and `from_unit` map it to [0, 1]^d.
struct Bounds {
  std::vector<double> lower;
  std::vector<double> upper;

  /// Calibration search domain for the nine constitutive parameters.
  static Bounds calibration_default();
  static Bounds unit(std::size_t dim);

  std::size_t dim() const { return lower.size(); }
  void validate() const;
  bool contains(std::span<const double> x) const;
  Eigen::VectorXd to_unit(std::span<const double> x) const;
  std::vector<double> from_unit(const Eigen::VectorXd& u) const;
};

}  // namespace cpbo
