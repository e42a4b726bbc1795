#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cpbo/sensitivity.hpp"
#include "fixtures.hpp"

namespace cpbo {
namespace {

Eigen::MatrixXd random_background(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd b(rows, cols);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = uniform(rng, -1.0, 1.0);
  return b;
}

Eigen::VectorXd random_point(int d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd x(d);
  for (auto& v : x) v = uniform(rng, -1.0, 1.0);
  return x;
}

TEST(Shapley, ConstantModelGivesZero) {
  const ScalarModel f = [](const Eigen::VectorXd&) { return 4.0; };
  for (double phi : shapley_values(f, random_point(5, 1), random_background(7, 5, 2))) EXPECT_EQ(phi, 0.0);
}

TEST(Shapley, LinearModelHasClosedForm) {
  const Eigen::VectorXd w = random_point(6, 3);
  const ScalarModel f = [&](const Eigen::VectorXd& v) { return 2.0 + w.dot(v); };
  const Eigen::MatrixXd bg = random_background(9, 6, 4);
  const Eigen::VectorXd x = random_point(6, 5);
  const Eigen::VectorXd mean = bg.colwise().mean().transpose();
  const auto phi = shapley_values(f, x, bg);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(phi[static_cast<std::size_t>(i)], w(i) * (x(i) - mean(i)), 1e-9);
}

TEST(Shapley, EfficiencyDummyAndSymmetry) {
  // x3 is a dummy; x0 and x1 enter symmetrically.
  const ScalarModel f = [](const Eigen::VectorXd& v) {
    return std::sin(v(0) + v(1)) + v(0) * v(1) * v(2) + std::exp(v(2));
  };
  const Eigen::MatrixXd bg = random_background(11, 4, 6);
  Eigen::MatrixXd sym_bg = bg;
  sym_bg.col(1) = bg.col(0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Eigen::VectorXd x = random_point(4, 100 + s);
    const auto phi = shapley_values(f, x, bg);
    double sum = 0.0;
    for (double p : phi) sum += p;
    EXPECT_NEAR(sum, f(x) - shap_baseline(f, bg), 1e-6);
    EXPECT_NEAR(phi[3], 0.0, 1e-9);

    Eigen::VectorXd xs = x;
    xs(1) = x(0);
    const auto phs = shapley_values(f, xs, sym_bg);
    EXPECT_NEAR(phs[0], phs[1], 1e-9);
  }
}

TEST(Shapley, MatchesPermutationDefinition) {
  // Average marginal contribution over all 4! orderings.
  const ScalarModel f = [](const Eigen::VectorXd& v) { return v(0) * v(1) + v(2) * v(2) * v(3) + v(1); };
  const Eigen::MatrixXd bg = random_background(5, 4, 8);
  const Eigen::VectorXd x = random_point(4, 9);
  auto value = [&](unsigned mask) {
    double s = 0.0;
    for (Eigen::Index b = 0; b < bg.rows(); ++b) {
      Eigen::VectorXd z = bg.row(b).transpose();
      for (int i = 0; i < 4; ++i)
        if (mask & (1U << i)) z(i) = x(i);
      s += f(z);
    }
    return s / static_cast<double>(bg.rows());
  };
  std::array<int, 4> order = {0, 1, 2, 3};
  std::array<double, 4> expected{};
  int count = 0;
  do {
    unsigned mask = 0;
    for (int i : order) {
      expected[static_cast<std::size_t>(i)] += value(mask | (1U << i)) - value(mask);
      mask |= 1U << i;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  const auto phi = shapley_values(f, x, bg);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(phi[i], expected[i] / count, 1e-12);
}

TEST(Shapley, RejectsBadShapes) {
  const ScalarModel f = [](const Eigen::VectorXd&) { return 0.0; };
  EXPECT_THROW(shapley_values(f, random_point(3, 1), Eigen::MatrixXd(0, 3)), InvalidArgument);
  EXPECT_THROW(shapley_values(f, random_point(3, 1), random_background(2, 4, 1)), InvalidArgument);
}

std::vector<SensitivitySample> additive_dataset(int n, std::uint64_t seed) {
  const Bounds b = Bounds::calibration_default();
  Rng rng(seed);
  std::vector<SensitivitySample> out(static_cast<std::size_t>(n));
  for (auto& s : out) {
    Eigen::VectorXd u(static_cast<Eigen::Index>(kNumParams));
    for (auto& v : u) v = uniform01(rng);
    u(8) = 0.5;  // never varied
    const auto x = b.from_unit(u);
    std::copy(x.begin(), x.end(), s.params.begin());
    const double f = 5.0 * u(0) + 2.0 * u(4) + 0.5 * u(5);
    s.probes.fill(f);
    s.probes[5] = 1.0;  // constant target
  }
  return out;
}

TEST(SensitivityStudy, AdditiveRankingAndUnvariedParameter) {
  const auto data = additive_dataset(40, 3);
  SensitivityOptions opt;
  opt.gp_restarts = 2;
  const std::array<ProbeTarget, 2> targets = {ProbeTarget::kGapMax32, ProbeTarget::kGapMin32Abs};
  const auto reports = sensitivity_study(data, targets, opt);
  ASSERT_EQ(reports.size(), 2u);
  const ShapReport& r = reports[0];
  ASSERT_FALSE(r.skipped) << r.diagnostic;
  EXPECT_EQ(r.ranking[0], 0u);
  EXPECT_EQ(r.ranking[1], 4u);
  EXPECT_EQ(r.ranking[2], 5u);
  EXPECT_EQ(r.rank_of(4), 2u);
  EXPECT_NEAR(r.mean_abs[8], 0.0, 1e-12);
  EXPECT_GT(r.r2_holdout, 0.95);
  for (std::size_t i = 0; i < r.shap.size(); ++i) {
    double sum = 0.0;
    for (double v : r.shap[i]) sum += v;
    EXPECT_NEAR(sum, r.predictions[i] - r.baseline, 1e-6);
  }
  EXPECT_TRUE(reports[1].skipped);
  EXPECT_FALSE(reports[1].diagnostic.empty());

  std::ostringstream summary;
  write_shap_summary_csv(summary, reports);
  EXPECT_EQ(summary.str().rfind("target,skipped,r2_holdout,baseline,mean_abs_n_rate,", 0), 0u);

  EXPECT_THROW(sensitivity_study(additive_dataset(20, 1), targets, opt), InvalidArgument);
}

LoadingProgram probe_program() {
  LoadingProgram p;
  p.steps_per_quarter = 20;
  return p;
}

TEST(Probes, SymmetricElasticCurve) {
  const StressStrainCurve c = testing::elastic_curve(probe_program(), 200000.0);
  const double tension = extract_probe(c, ProbeTarget::kStressAtPeakTension);
  EXPECT_NEAR(tension, 1000.0, 1e-6);
  EXPECT_NEAR(extract_probe(c, ProbeTarget::kStressAtPeakCompression), -tension, 1e-6);
  EXPECT_NEAR(extract_probe(c, ProbeTarget::kStressMidUnloading), 500.0, 1e-6);
  EXPECT_NEAR(extract_probe(c, ProbeTarget::kStressMidLoading), -500.0, 1e-6);
  EXPECT_NEAR(extract_probe(c, ProbeTarget::kGapMax32), 0.0, 1e-9);
  EXPECT_NEAR(extract_probe(c, ProbeTarget::kGapMin32Abs), 0.0, 1e-9);
}

TEST(Probes, GapsSeeCycleDrift) {
  const StressStrainCurve c = testing::synthetic_curve(probe_program(), [](int cycle, int, double, double e) {
    return 200000.0 * e + 3.0 * cycle;
  });
  EXPECT_NEAR(extract_probe(c, ProbeTarget::kGapMax32), 3.0, 1e-9);
  EXPECT_NEAR(extract_probe(c, ProbeTarget::kGapMin32Abs), 3.0, 1e-9);
  PolycrystalRun failed;
  failed.failed = true;
  EXPECT_THROW(extract_probe(failed, ProbeTarget::kGapMax32), InvalidArgument);
}

TEST(Probes, NamesRoundTrip) {
  for (ProbeTarget t : kAllProbeTargets) EXPECT_EQ(parse_probe_target(to_string(t)), t);
  EXPECT_THROW(parse_probe_target("nope"), InvalidArgument);
}

}  // namespace
}  // namespace cpbo
