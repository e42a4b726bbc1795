#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "cpbo/common.hpp"
#include "cpbo/io.hpp"
#include "cpbo/random.hpp"

namespace cpbo {

/// Crystal-to-sample rotation, stored as a unit quaternion (q and -q identified).
class Orientation {
 public:
  Orientation() = default;
  explicit Orientation(const Eigen::Quaterniond& q);

  /// Bunge (phi1, Phi, phi2) in degrees; the Bunge matrix maps sample to
  /// crystal, so the stored rotation is its transpose.
  static Orientation from_bunge_deg(double phi1, double Phi, double phi2);
  static Orientation from_matrix(const Mat3& crystal_to_sample);
  static Orientation from_axis_angle(const Vec3& axis, double angle_deg);
  static Orientation cube() { return Orientation(); }

  /// Haar-uniform sample on SO(3).
  static Orientation random(Rng& rng);

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }
  std::array<double, 3> to_bunge_deg() const;

  /// Composition: this rotation applied after `crystal_rotation`, which is
  /// expressed in this orientation's crystal frame.
  Orientation compose_crystal(const Orientation& crystal_rotation) const;

 private:
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

/// The 24 proper rotations of the cubic point group.
const std::array<Eigen::Quaterniond, 24>& cubic_symmetry();

/// Minimum rotation angle (degrees) relating `a` and `b` under cubic symmetry.
double misorientation(const Orientation& a, const Orientation& b);

inline constexpr double kBrandonSigma3Deg = 15.0 / 1.7320508075688772;  // 15 / sqrt(3) = 8.66

/// True when the misorientation lies within `window_deg` of the ideal
/// 60 deg <111> twin relation.
bool is_sigma3(const Orientation& a, const Orientation& b, double window_deg = kBrandonSigma3Deg);

/// Largest |cos(phi) cos(lambda)| over the FCC systems for a sample-frame axis.
double schmid_factor(const Orientation& orientation, const Vec3& loading_axis);

double diameter_2d_to_3d(double d2);

struct GrainRecord {
  int id = 0;
  Orientation orientation;
  double diameter_3d = 1.0;
  double volume_fraction = 1.0;
  std::optional<int> parent_id;
  std::vector<int> neighbors;
  std::optional<Vec3> center;  // synthetic packing position; absent after CSV import

  bool is_twin() const { return parent_id.has_value(); }
};

struct Ensemble {
  std::vector<GrainRecord> grains;
  double twin_volume_fraction = 0.0;
  std::uint64_t seed = 0;

  std::size_t index_of(int id) const;
  const GrainRecord& grain(int id) const { return grains[index_of(id)]; }
  /// Throws InvalidArgument when an invariant is violated.
  void validate() const;
  void recompute_twin_fraction();
};

/// Two-dimensional (equivalent circle) grain-size statistics in um.
struct SizeStats {
  double mean_2d = 23.37;
  double sd_2d = (19.2 + 17.98 + 19.46) / 3.0;
};

/// Lognormal (mu, sigma) of ln d whose mean and sd match the converted 3D statistics.
std::pair<double, double> lognormal_from_moments(double mean, double sd);

Ensemble sample_ensemble(const SizeStats& stats, int n_grains, double twin_target,
                         std::uint64_t seed);

/// Inserts lamellae into randomly chosen non-twin hosts until the twin
/// volume fraction reaches `twin_target`.
Ensemble add_twins(Ensemble ensemble, double twin_target, std::uint64_t seed);

Ensemble insert_twins(const Ensemble& ensemble, int grain_id, double lamella_fraction,
                      std::uint64_t seed);

double average_misorientation(const Ensemble& ensemble, int grain_id);

/// Right-continuous empirical distribution function.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> values);
  double operator()(double x) const;
  std::size_t size() const { return sorted_.size(); }

 private:
  std::vector<double> sorted_;
};

EmpiricalCdf empirical_cdf(std::span<const double> values);

void write_ensemble_csv(std::ostream& os, const Ensemble& ensemble,
                        const std::optional<Provenance>& prov = std::nullopt);
Ensemble read_ensemble_csv(std::istream& is);

inline Orientation Orientation::random(Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586;
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double u3 = uniform01(rng);
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  Eigen::Quaterniond q(b * std::cos(kTwoPi * u3), a * std::sin(kTwoPi * u2),
                       a * std::cos(kTwoPi * u2), b * std::sin(kTwoPi * u3));
  return Orientation(q);
}

}  // namespace cpbo
