#pragma once

// Single-crystal FCC material point: multiplicative F = Fe Fp kinematics,
// power-law slip rates, Taylor forest strengthening, latent-hardening matrix
// and Armstrong-Frederick backstress, integrated with explicit adaptive
// substepping.

#include <array>
#include <bitset>
#include <string_view>

#include "cpbo/common.hpp"

namespace cpbo {

struct SlipSystem {
  Vec3 s;  // slip direction
  Vec3 n;  // slip plane normal
  Vec3 t;  // edge line direction, n x s
};

/// Line-direction closure used for the forest projection of each density.
enum class ForestMode {
  kMean,   // SSDs use the mean of the edge and screw projections
  kEdge,   // SSDs use the edge projection
  kUnity,  // every projection coefficient is 1
};

ForestMode parse_forest_mode(std::string_view name);
std::string_view to_string(ForestMode mode);

/// The 12 {111}<110> systems with the geometric tables derived from them.
class SlipSystemSet {
 public:
  SlipSystemSet();

  const SlipSystem& operator[](std::size_t a) const { return systems_[a]; }
  static constexpr std::size_t size() { return kNumSlip; }

  /// s^a (x) n^a
  const Mat3& schmid(std::size_t a) const { return schmid_[a]; }
  bool coplanar(std::size_t a, std::size_t b) const { return coplanar_[a][b]; }
  /// Latent-hardening coefficient: 1.0 coplanar, q_noncoplanar otherwise.
  double latent(std::size_t a, std::size_t b, double q_coplanar, double q_noncoplanar) const {
    return coplanar_[a][b] ? q_coplanar : q_noncoplanar;
  }
  /// |n^a . t^b|
  double xi_edge(std::size_t a, std::size_t b) const { return xi_edge_[a][b]; }
  /// |n^a . s^b|
  double xi_screw(std::size_t a, std::size_t b) const { return xi_screw_[a][b]; }
  /// Projection coefficient for directionless (SSD) density under `mode`.
  double xi_ssd(std::size_t a, std::size_t b, ForestMode mode) const;

 private:
  std::array<SlipSystem, kNumSlip> systems_;
  std::array<Mat3, kNumSlip> schmid_;
  std::array<std::array<bool, kNumSlip>, kNumSlip> coplanar_{};
  std::array<std::array<double, kNumSlip>, kNumSlip> xi_edge_{};
  std::array<std::array<double, kNumSlip>, kNumSlip> xi_screw_{};
};

/// Shared, immutable FCC table.
const SlipSystemSet& fcc_slip_systems();

/// Calibrated constitutive parameters plus the fixed constants. Defaults are
/// the optimized Hastelloy X set at 500 F; stresses in MPa, lengths in um.
struct MaterialParams {
  double n_rate = 21.9;
  double tau_c0 = 22.2;
  double c_geom = 0.1;
  double rho_ssd = 83.7;
  double h0 = 87.1;
  double tau_s = 437.4;
  double m_exp = 9.0;
  double h_kin = 32694.6;
  double h_dyn = 711.0;

  double gamma_dot0 = 1.0e-3;
  double q_coplanar = 1.0;
  double q_noncoplanar = 1.2;
  double c11 = 250000.0;
  double c12 = 139000.0;
  double c44 = 70200.0;
  double g_shear = 70200.0;
  double burgers = 2.54e-4;
  ForestMode forest_mode = ForestMode::kMean;

  /// Throws InvalidArgument when an invariant is violated.
  void validate() const;

  /// Calibrated fields in canonical order
  /// (n_rate, tau_c0, c_geom, rho_ssd, h0, tau_s, m_exp, h_kin, h_dyn).
  ParamVector calibrated() const;
  void set_calibrated(const ParamVector& v);
  static MaterialParams from_calibrated(const ParamVector& v);
};

inline constexpr std::array<std::string_view, kNumParams> kParamNames = {
    "n_rate", "tau_c0", "c_geom", "rho_ssd", "h0", "tau_s", "m_exp", "h_kin", "h_dyn"};

struct MaterialPointState {
  Mat3 fp = Mat3::Identity();
  Mat3 f = Mat3::Identity();  // last converged total deformation gradient, sample frame
  SlipArray tau_c_stat{};
  SlipArray chi{};
  SlipArray gamma_acc{};
  SlipArray rho_gnd_edge{};
  SlipArray rho_gnd_screw{};
  double w_fip = 0.0;
  double p_acc = 0.0;
};

/// Substepping and idealization controls for one material-point step.
struct StepOptions {
  double max_dgamma = 1.0e-4;    // hard cap on |dgamma| per substep
  double stability = 0.5;        // n * dgamma * (c44 + h) / tau_c_eff bound
  double min_substep = 1.0e-12;  // seconds; below this the step is declared failed
  int max_substeps = 2'000'000;
  std::bitset<kNumSlip> active = std::bitset<kNumSlip>().set();  // frozen systems never slip
};

struct StepResult {
  Mat3 cauchy_stress = Mat3::Zero();
  MaterialPointState new_state;
  int substeps_used = 0;
  bool converged = true;
};

double resolved_shear(const Mat3& stress, const SlipSystem& sys);

/// Hutchinson slip rate; odd in tau - chi.
double flow_rate(double tau, double chi, double tau_c_eff, const MaterialParams& params);

/// C G b sqrt(rho_forest).
double taylor_term(const MaterialParams& params, double rho_forest);

/// Total per-system density |rho_s| + |rho_e| + rho_SSD.
SlipArray total_density(const MaterialPointState& state, const MaterialParams& params);

SlipArray forest_density(const MaterialPointState& state, const MaterialParams& params,
                         const SlipSystemSet& systems);

SlipArray effective_crss(const MaterialPointState& state, const MaterialParams& params,
                         const SlipSystemSet& systems);

SlipArray hardening_rates(const MaterialPointState& state, const SlipArray& gamma_dots,
                          const MaterialParams& params, const SlipSystemSet& systems);

double backstress_rate(double chi, double gamma_dot, const MaterialParams& params);

/// Second Piola-Kirchhoff stress in the crystal intermediate configuration
/// for the elastic Green-Lagrange strain of `fe`.
Mat3 cubic_pk2(const Mat3& fe, const MaterialParams& params);

/// Directional Young's modulus along a crystal <100> axis.
double youngs_modulus_100(const MaterialParams& params);

/// Matrix exponential for the small, traceless increments produced by slip.
Mat3 expm_small(const Mat3& a);

/// Advances the state from `state.f` to `f_new` over `dt` seconds.
/// `rotation` maps crystal-frame vectors to the sample frame.
StepResult step(const MaterialPointState& state, const Mat3& f_new, double dt,
                const MaterialParams& params, const SlipSystemSet& systems,
                const Mat3& rotation, const StepOptions& options = {});

/// Sample-frame Cauchy stress of a state at its current total deformation.
Mat3 cauchy_stress(const MaterialPointState& state, const MaterialParams& params,
                   const Mat3& rotation);

}  // namespace cpbo
