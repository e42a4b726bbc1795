#include "cpbo/gp_surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>

#include <nlohmann/json.hpp>

#include "cpbo/parallel.hpp"
#include "cpbo/random.hpp"

namespace cpbo {

namespace {

constexpr double kSqrt5 = 2.23606797749979;

// Box on the log hyperparameters, in standardized target units and unit-cube inputs.
constexpr double kLogSignalLo = -4.6;   // 0.01
constexpr double kLogSignalHi = 4.6;    // 100
constexpr double kLogLengthLo = -4.6;   // 0.01
constexpr double kLogLengthHi = 6.9;    // 1000
constexpr double kLogNoiseLo = -18.42;  // 1e-8
constexpr double kLogNoiseHi = 0.0;     // 1

double matern_of_r(double r, double signal) {
  const double a = kSqrt5 * r;
  return signal * (1.0 + a + a * a / 3.0) * std::exp(-a);
}

// -log marginal likelihood and its gradient over theta = (log s2, log l_1..d, log n2).
class NegLogLikelihood {
 public:
  NegLogLikelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) : y_(y) {
    const Eigen::Index n = x.rows();
    d2_.resize(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index d = 0; d < x.cols(); ++d) {
      Eigen::MatrixXd m(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          const double diff = x(i, d) - x(j, d);
          m(i, j) = diff * diff;
        }
      }
      d2_[static_cast<std::size_t>(d)] = std::move(m);
    }
  }

  std::size_t dim() const { return d2_.size() + 2; }

  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad, bool noise_free) const {
    const Eigen::Index n = y_.size();
    const std::size_t nd = d2_.size();
    const double s2 = std::exp(theta(0));
    const double n2 = std::exp(theta(static_cast<Eigen::Index>(nd + 1)));
    Eigen::MatrixXd scaled = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t d = 0; d < nd; ++d) {
      const double l = std::exp(theta(static_cast<Eigen::Index>(d + 1)));
      scaled += d2_[d] / (l * l);
    }
    Eigen::MatrixXd k(n, n);
    Eigen::MatrixXd dk_dr2(n, n);  // s2 (5/3)(1 + sqrt5 r) exp(-sqrt5 r)
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double r = std::sqrt(scaled(i, j));
        const double e = std::exp(-kSqrt5 * r);
        k(i, j) = s2 * (1.0 + kSqrt5 * r + 5.0 * r * r / 3.0) * e;
        dk_dr2(i, j) = s2 * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * e;
      }
    }
    Eigen::MatrixXd kn = k;
    kn.diagonal().array() += n2;
    Eigen::LLT<Eigen::MatrixXd> llt(kn);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Eigen::VectorXd alpha = llt.solve(y_);
    const Eigen::MatrixXd& l = llt.matrixLLT();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(l(i, i));
    const double nll = 0.5 * y_.dot(alpha) + logdet + 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    if (!std::isfinite(nll)) return std::numeric_limits<double>::infinity();
    if (grad) {
      const Eigen::MatrixXd w =
          alpha * alpha.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
      grad->resize(static_cast<Eigen::Index>(dim()));
      (*grad)(0) = -0.5 * (w.array() * k.array()).sum();
      for (std::size_t d = 0; d < nd; ++d) {
        const double ld = std::exp(theta(static_cast<Eigen::Index>(d + 1)));
        (*grad)(static_cast<Eigen::Index>(d + 1)) =
            -0.5 * (w.array() * dk_dr2.array() * d2_[d].array()).sum() / (ld * ld);
      }
      (*grad)(static_cast<Eigen::Index>(nd + 1)) = noise_free ? 0.0 : -0.5 * n2 * w.trace();
    }
    return nll;
  }

 private:
  Eigen::VectorXd y_;
  std::vector<Eigen::MatrixXd> d2_;
};

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  Eigen::VectorXd clamp(const Eigen::VectorXd& v) const { return v.cwiseMax(lo).cwiseMin(hi); }
};

// Gradient with components that push against an active bound removed.
Eigen::VectorXd free_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Box& box) {
  Eigen::VectorXd out = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x(i) <= box.lo(i) && g(i) > 0.0) || (x(i) >= box.hi(i) && g(i) < 0.0)) out(i) = 0.0;
  }
  return out;
}

// Projected BFGS with Armijo backtracking. Returns the final point and value.
std::pair<Eigen::VectorXd, double> minimize_bfgs(const NegLogLikelihood& f, Eigen::VectorXd x,
                                                 const Box& box, int max_iterations, bool noise_free) {
  x = box.clamp(x);
  Eigen::VectorXd g;
  double fx = f(x, &g, noise_free);
  if (!std::isfinite(fx)) return {x, fx};
  const Eigen::Index n = x.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::VectorXd gf = free_gradient(x, g, box);
    if (gf.lpNorm<Eigen::Infinity>() < 1e-6) break;
    Eigen::VectorXd p = -h * gf;
    if (gf.dot(p) >= 0.0) {
      h.setIdentity();
      p = -gf;
    }
    double step = 1.0;
    Eigen::VectorXd x_new;
    Eigen::VectorXd g_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    while (step > 1e-10) {
      x_new = box.clamp(x + step * p);
      f_new = f(x_new, &g_new, noise_free);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * gf.dot(x_new - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = free_gradient(x_new, g_new, box) - gf;
    const double sy = s.dot(yv);
    const double f_old = fx;
    x = x_new;
    fx = f_new;
    g = g_new;
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
      h = (id - rho * s * yv.transpose()) * h * (id - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    if (std::abs(f_old - fx) < 1e-10 * (1.0 + std::abs(fx))) break;
  }
  return {x, fx};
}

Eigen::MatrixXd to_unit_rows(const Eigen::MatrixXd& x, const Bounds& bounds) {
  Eigen::MatrixXd u(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    u.row(i) = bounds.to_unit(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))).transpose();
  }
  return u;
}

// Rows sorted lexicographically (then by target), so a fitted model does not
// depend on the order in which training data were supplied.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> canonical_order(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (x(a, c) != x(b, c)) return x(a, c) < x(b, c);
    }
    return y(a) < y(b);
  });
  Eigen::MatrixXd xs(x.rows(), x.cols());
  Eigen::VectorXd ys(y.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    xs.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    ys(static_cast<Eigen::Index>(i)) = y(idx[i]);
  }
  return {xs, ys};
}

void check_training_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Bounds& bounds) {
  bounds.validate();
  if (x.rows() < 2) throw InvalidArgument("gp: at least two training points are required");
  if (x.rows() != y.size()) throw InvalidArgument("gp: x and y sizes differ");
  if (static_cast<std::size_t>(x.cols()) != bounds.dim()) throw InvalidArgument("gp: x columns must match bounds");
  if (!x.allFinite() || !y.allFinite()) throw InvalidArgument("gp: training data must be finite");
}

}  // namespace

void KernelParams::validate() const {
  if (!(signal_variance > 0.0)) throw InvalidArgument("kernel: signal variance must be positive");
  if (lengthscales.empty()) throw InvalidArgument("kernel: lengthscales are required");
  for (double l : lengthscales) {
    if (!(l > 0.0)) throw InvalidArgument("kernel: lengthscales must be positive");
  }
  if (!(noise_variance >= kGpJitter)) throw InvalidArgument("kernel: noise variance is below the jitter floor");
}

double matern52(const Eigen::VectorXd& x, const Eigen::VectorXd& xp, const KernelParams& kernel) {
  if (x.size() != xp.size() || static_cast<std::size_t>(x.size()) != kernel.lengthscales.size()) {
    throw InvalidArgument("matern52: dimension mismatch");
  }
  double r2 = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double z = (x(d) - xp(d)) / kernel.lengthscales[static_cast<std::size_t>(d)];
    r2 += z * z;
  }
  return matern_of_r(std::sqrt(r2), kernel.signal_variance);
}

GpModel::GpModel(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Bounds& bounds,
                 const KernelParams& kernel)
    : bounds_(bounds), kernel_(kernel) {
  check_training_data(x, y, bounds);
  kernel.validate();
  if (kernel.lengthscales.size() != bounds.dim()) throw InvalidArgument("gp: one lengthscale per dimension");
  auto [xs, ys] = canonical_order(x, y);
  x_unit_ = to_unit_rows(xs, bounds);
  y_raw_ = ys;
  condition();
}

void GpModel::condition() {
  const Eigen::Index n = y_raw_.size();
  y_mean_ = y_raw_.mean();
  const double var = (y_raw_.array() - y_mean_).square().sum() / static_cast<double>(n - 1);
  y_sd_ = std::sqrt(var);
  constant_ = !(y_sd_ > 1e-12 * std::max(1.0, std::abs(y_mean_)));
  if (constant_) y_sd_ = 1.0;
  y_std_ = (y_raw_.array() - y_mean_) / y_sd_;
  if (constant_) y_std_.setZero();

  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      k(i, j) = matern52(x_unit_.row(i).transpose(), x_unit_.row(j).transpose(), kernel_);
      k(j, i) = k(i, j);
    }
  }
  k.diagonal().array() += kernel_.noise_variance;
  llt_.compute(k);
  if (llt_.info() != Eigen::Success) throw Error("gp: kernel matrix is not positive definite");
  alpha_ = llt_.solve(y_std_);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt_.matrixLLT()(i, i));
  lml_ = -0.5 * y_std_.dot(alpha_) - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

GpPrediction GpModel::predict(std::span<const double> x) const {
  const Eigen::VectorXd u = bounds_.to_unit(x);
  if (!u.allFinite()) throw InvalidArgument("gp: prediction input must be finite");
  if (constant_) return {y_mean_, kGpJitter};
  const Eigen::Index n = x_unit_.rows();
  Eigen::VectorXd ks(n);
  for (Eigen::Index i = 0; i < n; ++i) ks(i) = matern52(u, x_unit_.row(i).transpose(), kernel_);
  const double mean = ks.dot(alpha_);
  const Eigen::VectorXd v = llt_.matrixL().solve(ks);
  const double var = kernel_.signal_variance + kernel_.noise_variance - v.squaredNorm();
  return {y_mean_ + y_sd_ * mean, y_sd_ * y_sd_ * std::max(var, 0.0)};
}

GpPrediction GpModel::predict(const Eigen::VectorXd& x) const {
  return predict(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

double GpModel::mean(const Eigen::VectorXd& x) const {
  if (constant_) return y_mean_;
  const Eigen::VectorXd u = bounds_.to_unit(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x_unit_.rows(); ++i) acc += alpha_(i) * matern52(u, x_unit_.row(i).transpose(), kernel_);
  return y_mean_ + y_sd_ * acc;
}

Eigen::VectorXd GpModel::predict_mean(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict(Eigen::VectorXd(x.row(i).transpose())).mean;
  return out;
}

GpModel fit_gp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Bounds& bounds,
               const GpFitOptions& options) {
  check_training_data(x, y, bounds);
  if (options.restarts < 1) throw InvalidArgument("gp: at least one restart is required");
  const std::size_t nd = bounds.dim();

  GpModel model;
  model.bounds_ = bounds;
  auto [xs, ys] = canonical_order(x, y);
  model.x_unit_ = to_unit_rows(xs, bounds);
  model.y_raw_ = ys;
  model.kernel_.lengthscales.assign(nd, 0.5);
  model.condition();
  if (model.constant_) return model;

  const NegLogLikelihood nll(model.x_unit_, model.y_std_);
  const bool noise_free = !options.optimize_noise;
  Box box;
  box.lo = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(nd + 2), kLogLengthLo);
  box.hi = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(nd + 2), kLogLengthHi);
  box.lo(0) = kLogSignalLo;
  box.hi(0) = kLogSignalHi;
  box.lo(static_cast<Eigen::Index>(nd + 1)) = kLogNoiseLo;
  box.hi(static_cast<Eigen::Index>(nd + 1)) = noise_free ? kLogNoiseLo : kLogNoiseHi;

  std::vector<Eigen::VectorXd> starts(static_cast<std::size_t>(options.restarts));
  for (int r = 0; r < options.restarts; ++r) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(nd + 2));
    if (r == 0) {
      t.setConstant(std::log(0.5));
      t(0) = 0.0;
      t(static_cast<Eigen::Index>(nd + 1)) = std::log(1e-4);
    } else {
      Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(r)));
      t(0) = uniform(rng, std::log(0.1), std::log(10.0));
      for (std::size_t d = 0; d < nd; ++d) {
        t(static_cast<Eigen::Index>(d + 1)) = uniform(rng, std::log(0.05), std::log(5.0));
      }
      t(static_cast<Eigen::Index>(nd + 1)) = uniform(rng, std::log(1e-6), std::log(1e-1));
    }
    starts[static_cast<std::size_t>(r)] = box.clamp(t);
  }

  std::vector<std::pair<Eigen::VectorXd, double>> results(starts.size());
  parallel_for(starts.size(), [&](std::size_t r) {
    results[r] = minimize_bfgs(nll, starts[r], box, options.max_iterations, noise_free);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r) {
    if (results[r].second < results[best].second) best = r;
  }
  if (!std::isfinite(results[best].second)) throw Error("gp: every restart failed to factorize");

  const Eigen::VectorXd& t = results[best].first;
  model.kernel_.signal_variance = std::exp(t(0));
  for (std::size_t d = 0; d < nd; ++d) {
    model.kernel_.lengthscales[d] = std::exp(t(static_cast<Eigen::Index>(d + 1)));
  }
  model.kernel_.noise_variance = std::max(kGpJitter, std::exp(t(static_cast<Eigen::Index>(nd + 1))));
  model.condition();
  return model;
}

double r2_score(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw InvalidArgument("r2_score: size mismatch");
  if (y_true.size() < 2) throw InvalidArgument("r2_score: at least two points are required");
  double mean = 0.0;
  for (double v : y_true) mean += v;
  mean /= static_cast<double>(y_true.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw InvalidArgument("r2_score: y_true is constant");
  return 1.0 - ss_res / ss_tot;
}

void save_gp(std::ostream& os, const GpModel& model) {
  nlohmann::json j;
  j["format"] = "cpbo-gp";
  j["version"] = 1;
  j["kernel"] = "matern52-ard";
  j["bounds"] = {{"lower", model.bounds().lower}, {"upper", model.bounds().upper}};
  j["signal_variance"] = model.kernel().signal_variance;
  j["lengthscales"] = model.kernel().lengthscales;
  j["noise_variance"] = model.kernel().noise_variance;
  nlohmann::json xs = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.x_unit().rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < model.x_unit().cols(); ++c) row.push_back(model.x_unit()(i, c));
    xs.push_back(row);
  }
  j["x_unit"] = xs;
  j["y"] = std::vector<double>(model.y_raw().data(), model.y_raw().data() + model.y_raw().size());
  os << j.dump(1) << '\n';
}

GpModel load_gp(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
    if (j.at("format") != "cpbo-gp" || j.at("version") != 1) throw ParseError("gp model: unsupported format");
    GpModel model;
    Bounds bounds{j.at("bounds").at("lower").get<std::vector<double>>(),
                  j.at("bounds").at("upper").get<std::vector<double>>()};
    KernelParams kernel{j.at("signal_variance").get<double>(),
                        j.at("lengthscales").get<std::vector<double>>(),
                        j.at("noise_variance").get<double>()};
    const auto rows = j.at("x_unit").get<std::vector<std::vector<double>>>();
    const auto ys = j.at("y").get<std::vector<double>>();
    if (rows.size() != ys.size()) throw ParseError("gp model: x_unit and y sizes differ");
    bounds.validate();
    kernel.validate();
    if (kernel.lengthscales.size() != bounds.dim() || rows.size() < 2) {
      throw ParseError("gp model: inconsistent dimensions");
    }
    model.bounds_ = bounds;
    model.kernel_ = kernel;
    model.x_unit_.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(bounds.dim()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != bounds.dim()) throw ParseError("gp model: row width does not match bounds");
      for (std::size_t c = 0; c < rows[i].size(); ++c) {
        model.x_unit_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
      }
    }
    model.y_raw_ = Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    model.condition();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("gp model: ") + e.what());
  }
}

}  // namespace cpbo
