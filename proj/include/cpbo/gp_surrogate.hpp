#pragma once

// Gaussian-process regression with an ARD Matern 5/2 kernel. Inputs are
// mapped to the unit cube of a Bounds box and targets are standardized
// before fitting; predictions are returned in the original units.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cpbo/bounds.hpp"

namespace cpbo {

inline constexpr double kGpJitter = 1e-8;

struct KernelParams {
  double signal_variance = 1.0;
  std::vector<double> lengthscales;
  double noise_variance = kGpJitter;

  void validate() const;
};

double matern52(const Eigen::VectorXd& x, const Eigen::VectorXd& xp, const KernelParams& kernel);

struct GpFitOptions {
  int restarts = 8;
  std::uint64_t seed = 0;
  int max_iterations = 200;
  /// When false the noise variance stays at the jitter floor.
  bool optimize_noise = true;
};

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

class GpModel {
 public:
  GpModel() = default;

  /// Conditions a GP with fixed hyperparameters (no optimization).
  GpModel(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Bounds& bounds,
          const KernelParams& kernel);

  GpPrediction predict(std::span<const double> x) const;
  GpPrediction predict(const Eigen::VectorXd& x) const;
  /// Posterior mean only; cheaper than predict().
  double mean(const Eigen::VectorXd& x) const;
  /// Mean predictions for the rows of `x`.
  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& x) const;

  /// Log marginal likelihood of the standardized targets.
  double log_marginal_likelihood() const { return lml_; }

  const KernelParams& kernel() const { return kernel_; }
  const Bounds& bounds() const { return bounds_; }
  const Eigen::MatrixXd& x_unit() const { return x_unit_; }
  const Eigen::VectorXd& y_raw() const { return y_raw_; }
  double y_mean() const { return y_mean_; }
  double y_sd() const { return y_sd_; }
  bool is_constant() const { return constant_; }
  std::size_t dim() const { return bounds_.dim(); }
  std::size_t size() const { return static_cast<std::size_t>(y_raw_.size()); }

 private:
  friend GpModel fit_gp(const Eigen::MatrixXd&, const Eigen::VectorXd&, const Bounds&,
                        const GpFitOptions&);
  friend GpModel load_gp(std::istream&);

  void condition();

  Bounds bounds_;
  KernelParams kernel_;
  Eigen::MatrixXd x_unit_;  // n x d, rows in [0, 1]^d
  Eigen::VectorXd y_raw_;
  Eigen::VectorXd y_std_;
  double y_mean_ = 0.0;
  double y_sd_ = 1.0;
  bool constant_ = false;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
};

/// Maximizes the log marginal likelihood over log hyperparameters with
/// BFGS from `restarts` seeded starting points. Constant targets give a
/// constant model whose variance is the jitter floor.
GpModel fit_gp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Bounds& bounds,
               const GpFitOptions& options = {});

double r2_score(std::span<const double> y_true, std::span<const double> y_pred);

void save_gp(std::ostream& os, const GpModel& model);
GpModel load_gp(std::istream& is);

}  // namespace cpbo
