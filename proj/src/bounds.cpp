#include "cpbo/bounds.hpp"

namespace cpbo {

Bounds Bounds::calibration_default() {
  // n_rate, tau_c0, c_geom, rho_ssd, h0, tau_s, m_exp, h_kin, h_dyn
  return Bounds{{5.0, 20.0, 0.1, 1.0, 10.0, 50.0, 1.0, 1000.0, 0.0},
                {25.0, 150.0, 0.5, 100.0, 1000.0, 1000.0, 15.0, 80000.0, 3000.0}};
}

Bounds Bounds::unit(std::size_t dim) {
  return Bounds{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

void Bounds::validate() const {
  if (lower.empty() || lower.size() != upper.size()) {
    throw InvalidArgument("bounds: lower and upper must be nonempty and equal length");
  }
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i])) throw InvalidArgument("bounds: lower must be below upper");
  }
}

bool Bounds::contains(std::span<const double> x) const {
  if (x.size() != dim()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < lower[i] || x[i] > upper[i]) return false;
  }
  return true;
}

Eigen::VectorXd Bounds::to_unit(std::span<const double> x) const {
  if (x.size() != dim()) throw InvalidArgument("bounds: dimension mismatch");
  Eigen::VectorXd u(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    u(static_cast<Eigen::Index>(i)) = (x[i] - lower[i]) / (upper[i] - lower[i]);
  }
  return u;
}

std::vector<double> Bounds::from_unit(const Eigen::VectorXd& u) const {
  if (static_cast<std::size_t>(u.size()) != dim()) throw InvalidArgument("bounds: dimension mismatch");
  std::vector<double> x(dim());
  for (std::size_t i = 0; i < dim(); ++i) {
    x[i] = lower[i] + u(static_cast<Eigen::Index>(i)) * (upper[i] - lower[i]);
  }
  return x;
}

}  // namespace cpbo
