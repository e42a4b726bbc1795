#include "cpbo/slip_crystal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cpbo {

namespace {

// {111}<110>: three directions on each of the four planes.
constexpr int kPlanes[4][3] = {{1, 1, 1}, {-1, 1, 1}, {1, -1, 1}, {1, 1, -1}};
constexpr int kDirections[4][3][3] = {
    {{0, 1, -1}, {-1, 0, 1}, {1, -1, 0}},
    {{0, 1, -1}, {1, 0, 1}, {1, 1, 0}},
    {{0, 1, 1}, {-1, 0, 1}, {1, 1, 0}},
    {{0, 1, 1}, {1, 0, 1}, {1, -1, 0}},
};

Vec3 to_unit(const int (&v)[3]) {
  Vec3 out(v[0], v[1], v[2]);
  return out.normalized();
}

}  // namespace

SlipSystemSet::SlipSystemSet() {
  std::size_t a = 0;
  for (int p = 0; p < 4; ++p) {
    for (int d = 0; d < 3; ++d, ++a) {
      SlipSystem& sys = systems_[a];
      sys.n = to_unit(kPlanes[p]);
      sys.s = to_unit(kDirections[p][d]);
      sys.t = sys.n.cross(sys.s);
      schmid_[a] = sys.s * sys.n.transpose();
    }
  }
  for (std::size_t i = 0; i < kNumSlip; ++i) {
    for (std::size_t j = 0; j < kNumSlip; ++j) {
      // Plane normals are equal up to sign.
      coplanar_[i][j] = std::abs(std::abs(systems_[i].n.dot(systems_[j].n)) - 1.0) < 1e-12;
      xi_edge_[i][j] = std::abs(systems_[i].n.dot(systems_[j].t));
      xi_screw_[i][j] = std::abs(systems_[i].n.dot(systems_[j].s));
    }
  }
}

double SlipSystemSet::xi_ssd(std::size_t a, std::size_t b, ForestMode mode) const {
  switch (mode) {
    case ForestMode::kMean:
      return 0.5 * (xi_edge_[a][b] + xi_screw_[a][b]);
    case ForestMode::kEdge:
      return xi_edge_[a][b];
    case ForestMode::kUnity:
      return 1.0;
  }
  return 0.0;
}

const SlipSystemSet& fcc_slip_systems() {
  static const SlipSystemSet set;
  return set;
}

ForestMode parse_forest_mode(std::string_view name) {
  if (name == "mean") return ForestMode::kMean;
  if (name == "edge") return ForestMode::kEdge;
  if (name == "unity") return ForestMode::kUnity;
  throw InvalidArgument("unknown forest projection mode '" + std::string(name) + "'");
}

std::string_view to_string(ForestMode mode) {
  switch (mode) {
    case ForestMode::kMean:
      return "mean";
    case ForestMode::kEdge:
      return "edge";
    case ForestMode::kUnity:
      return "unity";
  }
  return "mean";
}

void MaterialParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument(std::string("material parameter ") + name + " must be positive");
    }
  };
  positive(n_rate, "n_rate");
  positive(tau_c0, "tau_c0");
  positive(c_geom, "c_geom");
  positive(rho_ssd, "rho_ssd");
  positive(h0, "h0");
  positive(tau_s, "tau_s");
  positive(m_exp, "m_exp");
  positive(h_kin, "h_kin");
  positive(gamma_dot0, "gamma_dot0");
  positive(c11, "c11");
  positive(c44, "c44");
  positive(g_shear, "g_shear");
  positive(burgers, "burgers");
  if (!(h_dyn >= 0.0) || !std::isfinite(h_dyn)) {
    throw InvalidArgument("material parameter h_dyn must be nonnegative");
  }
  if (!(tau_s > tau_c0)) {
    throw InvalidArgument("saturation strength tau_s must exceed tau_c0");
  }
  if (!(c11 > std::abs(c12)) || !(c11 + 2.0 * c12 > 0.0)) {
    throw InvalidArgument("cubic elastic constants are not positive definite");
  }
}

ParamVector MaterialParams::calibrated() const {
  return {n_rate, tau_c0, c_geom, rho_ssd, h0, tau_s, m_exp, h_kin, h_dyn};
}

void MaterialParams::set_calibrated(const ParamVector& v) {
  n_rate = v[0];
  tau_c0 = v[1];
  c_geom = v[2];
  rho_ssd = v[3];
  h0 = v[4];
  tau_s = v[5];
  m_exp = v[6];
  h_kin = v[7];
  h_dyn = v[8];
}

MaterialParams MaterialParams::from_calibrated(const ParamVector& v) {
  MaterialParams p;
  p.set_calibrated(v);
  return p;
}

double resolved_shear(const Mat3& stress, const SlipSystem& sys) {
  return sys.s.dot(stress * sys.n);
}

double flow_rate(double tau, double chi, double tau_c_eff, const MaterialParams& params) {
  const double over = tau - chi;
  if (over == 0.0) return 0.0;
  const double mag = params.gamma_dot0 * std::pow(std::abs(over) / tau_c_eff, params.n_rate);
  return over > 0.0 ? mag : -mag;
}

double taylor_term(const MaterialParams& params, double rho_forest) {
  return params.c_geom * params.g_shear * params.burgers * std::sqrt(std::max(rho_forest, 0.0));
}

SlipArray total_density(const MaterialPointState& state, const MaterialParams& params) {
  SlipArray out{};
  for (std::size_t b = 0; b < kNumSlip; ++b) {
    out[b] = std::abs(state.rho_gnd_screw[b]) + std::abs(state.rho_gnd_edge[b]) + params.rho_ssd;
  }
  return out;
}

SlipArray forest_density(const MaterialPointState& state, const MaterialParams& params,
                         const SlipSystemSet& systems) {
  SlipArray out{};
  for (std::size_t a = 0; a < kNumSlip; ++a) {
    double sum = 0.0;
    for (std::size_t b = 0; b < kNumSlip; ++b) {
      sum += systems.xi_screw(a, b) * std::abs(state.rho_gnd_screw[b]) +
             systems.xi_edge(a, b) * std::abs(state.rho_gnd_edge[b]) +
             systems.xi_ssd(a, b, params.forest_mode) * params.rho_ssd;
    }
    out[a] = sum;
  }
  return out;
}

SlipArray effective_crss(const MaterialPointState& state, const MaterialParams& params,
                         const SlipSystemSet& systems) {
  const SlipArray forest = forest_density(state, params, systems);
  SlipArray out{};
  for (std::size_t a = 0; a < kNumSlip; ++a) {
    out[a] = params.tau_c0 + taylor_term(params, forest[a]) + state.tau_c_stat[a];
  }
  return out;
}

namespace {

// h0 (1 - tau_c/tau_s)^m |gamma_dot|, clamped so an overshoot past tau_s
// cannot produce a negative base.
SlipArray hardening_sources(const SlipArray& tau_c_stat, const SlipArray& gamma_dots,
                            const MaterialParams& params) {
  SlipArray src{};
  for (std::size_t b = 0; b < kNumSlip; ++b) {
    if (gamma_dots[b] == 0.0) continue;
    const double base = std::max(1.0 - tau_c_stat[b] / params.tau_s, 0.0);
    src[b] = params.h0 * std::pow(base, params.m_exp) * std::abs(gamma_dots[b]);
  }
  return src;
}

}  // namespace

SlipArray hardening_rates(const MaterialPointState& state, const SlipArray& gamma_dots,
                          const MaterialParams& params, const SlipSystemSet& systems) {
  const SlipArray src = hardening_sources(state.tau_c_stat, gamma_dots, params);
  SlipArray out{};
  for (std::size_t a = 0; a < kNumSlip; ++a) {
    double sum = 0.0;
    for (std::size_t b = 0; b < kNumSlip; ++b) {
      sum += systems.latent(a, b, params.q_coplanar, params.q_noncoplanar) * src[b];
    }
    out[a] = sum;
  }
  return out;
}

double backstress_rate(double chi, double gamma_dot, const MaterialParams& params) {
  return params.h_kin * gamma_dot - params.h_dyn * chi * std::abs(gamma_dot);
}

Mat3 cubic_pk2(const Mat3& fe, const MaterialParams& params) {
  const Mat3 e = 0.5 * (fe.transpose() * fe - Mat3::Identity());
  const double tr = e.trace();
  Mat3 s;
  const double c11_minus_c12 = params.c11 - params.c12;
  for (int i = 0; i < 3; ++i) s(i, i) = params.c12 * tr + c11_minus_c12 * e(i, i);
  s(0, 1) = s(1, 0) = 2.0 * params.c44 * e(0, 1);
  s(0, 2) = s(2, 0) = 2.0 * params.c44 * e(0, 2);
  s(1, 2) = s(2, 1) = 2.0 * params.c44 * e(1, 2);
  return s;
}

double youngs_modulus_100(const MaterialParams& params) {
  const double c11 = params.c11;
  const double c12 = params.c12;
  return (c11 - c12) * (c11 + 2.0 * c12) / (c11 + c12);
}

Mat3 expm_small(const Mat3& a) {
  // Scaling and squaring around a Taylor series; slip increments are tiny,
  // so the loop almost always exits with zero squarings.
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  double scale = 1.0;
  while (norm * scale > 0.5) {
    scale *= 0.5;
    ++squarings;
  }
  const Mat3 x = a * scale;
  Mat3 result = Mat3::Identity();
  Mat3 term = Mat3::Identity();
  for (int k = 1; k < 30; ++k) {
    term = term * x / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18) break;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

namespace {

Mat3 cauchy_from_crystal(const Mat3& fc, const Mat3& fp_inv, const MaterialParams& params,
                         const Mat3& rotation) {
  const Mat3 fe = fc * fp_inv;
  const Mat3 pk2 = cubic_pk2(fe, params);
  Mat3 sigma = fe * pk2 * fe.transpose() / fe.determinant();
  sigma = 0.5 * (sigma + sigma.transpose());
  Mat3 out = rotation * sigma * rotation.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

Mat3 cauchy_stress(const MaterialPointState& state, const MaterialParams& params,
                   const Mat3& rotation) {
  const Mat3 fc = rotation.transpose() * state.f * rotation;
  return cauchy_from_crystal(fc, state.fp.inverse(), params, rotation);
}

StepResult step(const MaterialPointState& state, const Mat3& f_new, double dt,
                const MaterialParams& params, const SlipSystemSet& systems,
                const Mat3& rotation, const StepOptions& options) {
  if (!(dt > 0.0)) throw InvalidArgument("step: dt must be positive");
  if (std::abs(f_new.determinant()) < 1e-12) throw InvalidArgument("step: F is singular");

  StepResult result;
  MaterialPointState& st = result.new_state;
  st = state;

  const Mat3 rt = rotation.transpose();
  const Mat3 fc_old = rt * state.f * rotation;
  const Mat3 fc_new = rt * f_new * rotation;
  const Mat3 dfc = fc_new - fc_old;

  // Forest strengthening is constant within a step: densities do not evolve.
  const SlipArray forest = forest_density(st, params, systems);
  SlipArray base{};
  for (std::size_t a = 0; a < kNumSlip; ++a) base[a] = params.tau_c0 + taylor_term(params, forest[a]);

  double q[kNumSlip][kNumSlip];
  for (std::size_t a = 0; a < kNumSlip; ++a) {
    for (std::size_t b = 0; b < kNumSlip; ++b) {
      q[a][b] = systems.latent(a, b, params.q_coplanar, params.q_noncoplanar);
    }
  }

  const double stiffness = params.c44 + params.h_kin;
  Mat3 fp_inv = st.fp.inverse();
  SlipArray tau{};
  SlipArray rate{};
  double t = 0.0;
  int substeps = 0;

  while (t < dt) {
    const Mat3 fc = fc_old + (t / dt) * dfc;
    const Mat3 fe = fc * fp_inv;
    const Mat3 pk2 = cubic_pk2(fe, params);

    double max_rate = 0.0;
    double min_crss = std::numeric_limits<double>::max();
    for (std::size_t a = 0; a < kNumSlip; ++a) {
      if (!options.active[a]) {
        rate[a] = 0.0;
        tau[a] = 0.0;
        continue;
      }
      tau[a] = systems[a].s.dot(pk2 * systems[a].n);
      const double crss = base[a] + st.tau_c_stat[a];
      min_crss = std::min(min_crss, crss);
      rate[a] = flow_rate(tau[a], st.chi[a], crss, params);
      max_rate = std::max(max_rate, std::abs(rate[a]));
    }
    if (!std::isfinite(max_rate)) {
      result.converged = false;
      break;
    }

    double h = dt - t;
    if (max_rate > 0.0) {
      const double cap =
          std::min(options.max_dgamma, options.stability * min_crss / (params.n_rate * stiffness));
      if (max_rate * h > cap) h = cap / max_rate;
    }
    if (h < options.min_substep || substeps >= options.max_substeps) {
      result.converged = false;
      break;
    }

    Mat3 lp = Mat3::Zero();
    double work = 0.0;
    for (std::size_t a = 0; a < kNumSlip; ++a) {
      if (rate[a] == 0.0) continue;
      lp += rate[a] * systems.schmid(a);
      work += tau[a] * rate[a];
    }

    if (max_rate > 0.0) {
      st.fp = expm_small(lp * h) * st.fp;
      fp_inv = st.fp.inverse();

      const SlipArray src = hardening_sources(st.tau_c_stat, rate, params);
      for (std::size_t a = 0; a < kNumSlip; ++a) {
        double dtau = 0.0;
        for (std::size_t b = 0; b < kNumSlip; ++b) dtau += q[a][b] * src[b];
        st.tau_c_stat[a] += dtau * h;
      }
      for (std::size_t a = 0; a < kNumSlip; ++a) {
        st.chi[a] += backstress_rate(st.chi[a], rate[a], params) * h;
        st.gamma_acc[a] += std::abs(rate[a]) * h;
      }
      st.w_fip += work * h;
      st.p_acc += std::sqrt(2.0 / 3.0 * lp.squaredNorm()) * h;
    }

    ++substeps;
    t += h;
    if (dt - t <= 1e-14 * dt) t = dt;
  }

  st.f = f_new;
  result.substeps_used = substeps;
  if (result.converged) {
    result.cauchy_stress = cauchy_from_crystal(fc_new, fp_inv, params, rotation);
    if (!result.cauchy_stress.allFinite()) result.converged = false;
  }
  return result;
}

}  // namespace cpbo
