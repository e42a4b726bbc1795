#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cpbo/polycrystal.hpp"
#include "fixtures.hpp"

namespace cpbo {
namespace {

using testing::single_grain;
using testing::synthetic_curve;

double strain_at(const Waveform& w, double t) {
  for (std::size_t i = 1; i < w.time.size(); ++i) {
    if (t <= w.time[i]) {
      const double f = (t - w.time[i - 1]) / (w.time[i] - w.time[i - 1]);
      return w.strain[i - 1] + f * (w.strain[i] - w.strain[i - 1]);
    }
  }
  return w.strain.back();
}

TEST(Waveform, PeakAndValleyTimes) {
  LoadingProgram p;
  const Waveform w = triangular_waveform(p);
  const auto peak = std::max_element(w.strain.begin(), w.strain.end()) - w.strain.begin();
  const auto valley = std::min_element(w.strain.begin(), w.strain.end()) - w.strain.begin();
  EXPECT_NEAR(w.time[static_cast<std::size_t>(peak)], 0.5, 1e-12);
  EXPECT_NEAR(w.time[static_cast<std::size_t>(valley)], 1.5, 1e-12);
  EXPECT_EQ(w.strain[static_cast<std::size_t>(peak)], 0.005);
}

TEST(Waveform, ConstantRateAndOddSymmetry) {
  LoadingProgram p;
  p.steps_per_quarter = 7;
  const Waveform w = triangular_waveform(p);
  for (std::size_t i = 1; i < w.time.size(); ++i) {
    const double rate = std::abs(w.strain[i] - w.strain[i - 1]) / (w.time[i] - w.time[i - 1]);
    EXPECT_NEAR(rate, p.rate, 1e-9);
  }
  // Odd about the zero crossings at t = 1, 2, 3, ...
  for (double t0 : {1.0, 2.0, 4.0}) {
    for (double dt : {0.1, 0.25, 0.37}) {
      EXPECT_NEAR(strain_at(w, t0 + dt), -strain_at(w, t0 - dt), 1e-15);
    }
  }
}

TEST(Waveform, CycleCountsAndRRatio) {
  LoadingProgram p;
  p.cycles = 3;
  const Waveform w = triangular_waveform(p);
  EXPECT_EQ(std::count(w.strain.begin(), w.strain.end(), p.amplitude), 3);
  EXPECT_EQ(w.cycle_index.back(), 3);

  LoadingProgram r0 = p;
  r0.r_ratio = 0.0;
  const Waveform w0 = triangular_waveform(r0);
  EXPECT_EQ(*std::min_element(w0.strain.begin(), w0.strain.end()), 0.0);
  EXPECT_EQ(w0.cycle_index.front(), 0);  // lead-in ramp to the mean strain
  StressStrainCurve c;
  for (std::size_t i = 0; i < w0.time.size(); ++i) c.push_back(w0.time[i], w0.strain[i], 0.0, w0.cycle_index[i]);
  EXPECT_EQ(segment_cycles(c).cycles.size(), 3u);
}

TEST(Waveform, InvalidProgramsRejected) {
  LoadingProgram p;
  p.rate = 0.2;
  EXPECT_THROW(triangular_waveform(p), InvalidArgument);
  p = {};
  p.amplitude = 0.0;
  EXPECT_THROW(triangular_waveform(p), InvalidArgument);
  p = {};
  p.cycles = 0;
  EXPECT_THROW(triangular_waveform(p), InvalidArgument);
}

StressStrainCurve drifting_curve(double peak_drift, double valley_drift, int cycles = 3) {
  LoadingProgram p;
  p.cycles = cycles;
  p.steps_per_quarter = 10;
  return synthetic_curve(p, [=](int c, int q, double u, double) {
    const double peak = 300.0 + peak_drift * c;
    const double valley = -300.0 + valley_drift * c;
    switch (q) {
      case 0: return u * peak;
      case 1: return (1.0 - u) * peak;
      case 2: return u * valley;
      default: return (1.0 - u) * valley;
    }
  });
}

TEST(CycleEndpoints, Examples) {
  const CycleEndpoints same = extract_cycle_endpoints(drifting_curve(0.0, 0.0), 2, 3);
  EXPECT_EQ(same.dmax, 0.0);
  EXPECT_EQ(same.dmin_abs, 0.0);

  const CycleEndpoints d = extract_cycle_endpoints(drifting_curve(5.0, -3.0), 2, 3);
  EXPECT_NEAR(d.dmax, 5.0, 1e-12);
  EXPECT_NEAR(d.dmin_abs, 3.0, 1e-12);

  const CycleEndpoints ten = extract_cycle_endpoints(drifting_curve(10.0, 0.0), 1, 2);
  EXPECT_NEAR(ten.dmax, 10.0, 1e-12);  // 320 - 310 at the peaks

  EXPECT_THROW(extract_cycle_endpoints(drifting_curve(0.0, 0.0), 3, 4), InvalidArgument);
}

TEST(CycleSegmentation, FindsPhaseMarks) {
  const StressStrainCurve c = drifting_curve(0.0, 0.0);
  const CycleSegmentation seg = segment_cycles(c);
  ASSERT_EQ(seg.cycles.size(), 3u);
  EXPECT_NEAR(seg.cycles[1].t_start, 2.0, 1e-12);
  EXPECT_NEAR(seg.cycles[1].t_peak, 2.5, 1e-12);
  EXPECT_NEAR(seg.cycles[1].t_fall, 3.0, 1e-12);
  EXPECT_NEAR(seg.cycles[1].t_valley, 3.5, 1e-12);
  EXPECT_NEAR(seg.cycles[1].t_end, 4.0, 1e-12);
  EXPECT_NEAR(stress_at_phase(c, seg.cycles[1], 1, 0.5), 150.0, 1e-9);
}

TEST(Curve, ValidateCatchesInconsistency) {
  StressStrainCurve c;
  c.push_back(0.0, 0.0, 0.0, 1);
  c.push_back(1.0, 0.1, 1.0, 1);
  EXPECT_NO_THROW(c.validate());
  c.push_back(1.0, 0.2, 1.0, 1);
  EXPECT_THROW(c.validate(), InvalidArgument);
  StressStrainCurve d;
  d.push_back(0.0, 0.0, 0.0, 2);
  d.push_back(1.0, 0.0, 0.0, 1);
  EXPECT_THROW(d.validate(), InvalidArgument);
}

TEST(RunUniaxial, CubeCrystalModulus) {
  MaterialParams params;
  LoadingProgram p;
  p.amplitude = 1e-4;
  p.cycles = 1;
  const PolycrystalRun run = run_uniaxial(single_grain(), params, p);
  ASSERT_FALSE(run.failed);
  const auto peak = std::max_element(run.curve.strain.begin(), run.curve.strain.end()) - run.curve.strain.begin();
  const double modulus = run.curve.stress[static_cast<std::size_t>(peak)] / p.amplitude;
  const double oracle = (250e3 - 139e3) * (250e3 + 2 * 139e3) / (250e3 + 139e3);
  EXPECT_NEAR(modulus, oracle, 0.005 * oracle);
}

TEST(RunUniaxial, SingleGrainEqualsMaterialPoint) {
  MaterialParams params;
  LoadingProgram p;
  p.cycles = 1;
  p.steps_per_quarter = 20;
  const Orientation o = Orientation::from_bunge_deg(30.0, 40.0, 50.0);
  const PolycrystalRun run = run_uniaxial(single_grain(o), params, p);
  ASSERT_FALSE(run.failed);
  const Mat3 sigma = cauchy_stress(run.per_grain_final[0], params, o.matrix());
  EXPECT_NEAR(sigma(2, 2), run.curve.stress.back(), 1e-9 * std::max(1.0, std::abs(sigma(2, 2))));
  EXPECT_LT(std::abs(0.5 * (sigma(0, 0) + sigma(1, 1))), 0.1);
}

class SmallEnsemble : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ensemble_ = new Ensemble(sample_ensemble(SizeStats{}, 40, 0.0, 3));
    LoadingProgram p;
    p.steps_per_quarter = 25;
    run_ = new PolycrystalRun(run_uniaxial(*ensemble_, MaterialParams{}, p));
  }
  static void TearDownTestSuite() {
    delete ensemble_;
    delete run_;
  }
  static Ensemble* ensemble_;
  static PolycrystalRun* run_;
};
Ensemble* SmallEnsemble::ensemble_ = nullptr;
PolycrystalRun* SmallEnsemble::run_ = nullptr;

TEST_F(SmallEnsemble, LateralStressNulledAtEveryStep) {
  ASSERT_FALSE(run_->failed);
  ASSERT_FALSE(run_->lateral_residual.empty());
  for (double r : run_->lateral_residual) EXPECT_LT(r, 0.1);
}

TEST_F(SmallEnsemble, CurveInvariantsAndIncompressibility) {
  EXPECT_NO_THROW(run_->curve.validate());
  EXPECT_EQ(segment_cycles(run_->curve).cycles.size(), 3u);
  for (const auto& st : run_->per_grain_final) EXPECT_NEAR(st.fp.determinant(), 1.0, 1e-6);
}

TEST_F(SmallEnsemble, GrainOrderDoesNotChangeCurve) {
  Ensemble shuffled = *ensemble_;
  std::reverse(shuffled.grains.begin(), shuffled.grains.end());
  std::rotate(shuffled.grains.begin(), shuffled.grains.begin() + 7, shuffled.grains.end());
  LoadingProgram p;
  p.steps_per_quarter = 25;
  const PolycrystalRun other = run_uniaxial(shuffled, MaterialParams{}, p);
  ASSERT_EQ(other.curve.size(), run_->curve.size());
  for (std::size_t i = 0; i < other.curve.size(); ++i) {
    ASSERT_EQ(other.curve.stress[i], run_->curve.stress[i]) << i;
  }
}

TEST_F(SmallEnsemble, CsvExport) {
  std::ostringstream os;
  write_curve_csv(os, run_->curve, Provenance{3, "abc"});
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# seed=3 config_hash=abc");
  std::getline(in, line);
  EXPECT_EQ(line, "time_s,strain,stress_mpa,cycle");
}

TEST(RunUniaxial, FailureFlagOnStressBlowup) {
  HomogenizationOptions opts;
  opts.failure_stress = 1.0;
  const PolycrystalRun run = run_uniaxial(single_grain(), MaterialParams{}, LoadingProgram{}, opts);
  EXPECT_TRUE(run.failed);
  EXPECT_FALSE(run.failure_reason.empty());
}

TEST(RunUniaxial, RejectsBadEnsembleAndParams) {
  Ensemble e = single_grain();
  e.grains[0].volume_fraction = 0.5;
  EXPECT_THROW(run_uniaxial(e, MaterialParams{}, LoadingProgram{}), InvalidArgument);
  MaterialParams bad;
  bad.tau_s = 10.0;
  EXPECT_THROW(run_uniaxial(single_grain(), bad, LoadingProgram{}), InvalidArgument);
}

TEST(RunUniaxial, CyclicStabilizationOn300Grains) {
  const Ensemble e = sample_ensemble(SizeStats{}, 300, 0.0, 7);
  const PolycrystalRun run = run_uniaxial(e, MaterialParams{}, LoadingProgram{});
  ASSERT_FALSE(run.failed);
  const CycleEndpoints d21 = extract_cycle_endpoints(run.curve, 1, 2);
  const CycleEndpoints d32 = extract_cycle_endpoints(run.curve, 2, 3);
  EXPECT_LT(std::abs(d32.dmax), std::abs(d21.dmax));
}

}  // namespace
}  // namespace cpbo
