#include "cpbo/microstructure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "cpbo/slip_crystal.hpp"

namespace cpbo {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg = kPi / 180.0;

// Rotation angle in degrees of a unit quaternion, folding q ~ -q.
double angle_deg(const Eigen::Quaterniond& q) {
  const double w = std::min(1.0, std::abs(q.w()));
  return 2.0 * std::acos(w) / kDeg;
}

}  // namespace

Orientation::Orientation(const Eigen::Quaterniond& q) : q_(q.normalized()) {
  if (q_.w() < 0.0) q_.coeffs() *= -1.0;
}

Orientation Orientation::from_bunge_deg(double phi1, double Phi, double phi2) {
  const double c1 = std::cos(phi1 * kDeg), s1 = std::sin(phi1 * kDeg);
  const double c = std::cos(Phi * kDeg), s = std::sin(Phi * kDeg);
  const double c2 = std::cos(phi2 * kDeg), s2 = std::sin(phi2 * kDeg);
  Mat3 g;  // sample -> crystal
  g << c1 * c2 - s1 * s2 * c, s1 * c2 + c1 * s2 * c, s2 * s,
      -c1 * s2 - s1 * c2 * c, -s1 * s2 + c1 * c2 * c, c2 * s,
      s1 * s, -c1 * s, c;
  return from_matrix(g.transpose());
}

Orientation Orientation::from_matrix(const Mat3& crystal_to_sample) {
  return Orientation(Eigen::Quaterniond(crystal_to_sample));
}

Orientation Orientation::from_axis_angle(const Vec3& axis, double angle_deg) {
  return Orientation(Eigen::Quaterniond(Eigen::AngleAxisd(angle_deg * kDeg, axis.normalized())));
}

std::array<double, 3> Orientation::to_bunge_deg() const {
  const Mat3 g = matrix().transpose();  // sample -> crystal
  const double Phi = std::acos(std::clamp(g(2, 2), -1.0, 1.0));
  double phi1 = 0.0;
  double phi2 = 0.0;
  if (std::abs(std::sin(Phi)) > 1e-10) {
    phi1 = std::atan2(g(2, 0), -g(2, 1));
    phi2 = std::atan2(g(0, 2), g(1, 2));
  } else {
    // Gimbal lock: only phi1 + phi2 (or phi1 - phi2) is defined.
    phi1 = std::atan2(g(0, 1), g(0, 0));
    if (g(2, 2) < 0.0) phi1 = std::atan2(-g(0, 1), g(0, 0));
  }
  auto wrap = [](double r) {
    double d = r / kDeg;
    if (d < 0.0) d += 360.0;
    return d;
  };
  return {wrap(phi1), Phi / kDeg, wrap(phi2)};
}

Orientation Orientation::compose_crystal(const Orientation& crystal_rotation) const {
  return Orientation(q_ * crystal_rotation.q_);
}

const std::array<Eigen::Quaterniond, 24>& cubic_symmetry() {
  static const std::array<Eigen::Quaterniond, 24> ops = [] {
    std::array<Eigen::Quaterniond, 24> out;
    const double r = std::sqrt(0.5);
    std::size_t k = 0;
    auto add = [&](double w, double x, double y, double z) {
      out[k++] = Eigen::Quaterniond(w, x, y, z);
    };
    add(1, 0, 0, 0);
    // 180 deg about <100>
    add(0, 1, 0, 0);
    add(0, 0, 1, 0);
    add(0, 0, 0, 1);
    // +-90 deg about <100>
    add(r, r, 0, 0);
    add(r, -r, 0, 0);
    add(r, 0, r, 0);
    add(r, 0, -r, 0);
    add(r, 0, 0, r);
    add(r, 0, 0, -r);
    // +-120 deg about <111>
    for (int sx : {1, -1}) {
      for (int sy : {1, -1}) {
        for (int sz : {1, -1}) add(0.5, 0.5 * sx, 0.5 * sy, 0.5 * sz);
      }
    }
    // 180 deg about <110>
    add(0, r, r, 0);
    add(0, r, -r, 0);
    add(0, r, 0, r);
    add(0, r, 0, -r);
    add(0, 0, r, r);
    add(0, 0, r, -r);
    return out;
  }();
  return ops;
}

double misorientation(const Orientation& a, const Orientation& b) {
  // The rotation angle is a class function, so S_i D S_j has the angle of
  // D S_j S_i; one-sided enumeration over the group covers both sides.
  const Eigen::Quaterniond d = a.quaternion().conjugate() * b.quaternion();
  double best_w = 0.0;
  for (const auto& s : cubic_symmetry()) {
    best_w = std::max(best_w, std::abs((d * s).w()));
  }
  return angle_deg(Eigen::Quaterniond(best_w, 0, 0, 0));
}

bool is_sigma3(const Orientation& a, const Orientation& b, double window_deg) {
  const Eigen::Quaterniond twin_inv =
      Orientation::from_axis_angle(Vec3(1, 1, 1), 60.0).quaternion().conjugate();
  const Eigen::Quaterniond d = a.quaternion().conjugate() * b.quaternion();
  double best_w = 0.0;
  for (const auto& si : cubic_symmetry()) {
    for (const auto& sj : cubic_symmetry()) {
      best_w = std::max(best_w, std::abs((twin_inv * si * d * sj).w()));
    }
  }
  return angle_deg(Eigen::Quaterniond(best_w, 0, 0, 0)) <= window_deg;
}

double schmid_factor(const Orientation& orientation, const Vec3& loading_axis) {
  if (std::abs(loading_axis.norm() - 1.0) > 1e-9) {
    throw InvalidArgument("schmid_factor: loading axis must be a unit vector");
  }
  const Vec3 axis = orientation.matrix().transpose() * loading_axis;
  const SlipSystemSet& systems = fcc_slip_systems();
  double best = 0.0;
  for (std::size_t a = 0; a < kNumSlip; ++a) {
    best = std::max(best, std::abs(axis.dot(systems[a].n) * axis.dot(systems[a].s)));
  }
  return best;
}

double diameter_2d_to_3d(double d2) {
  if (!(d2 > 0.0)) throw InvalidArgument("diameter_2d_to_3d: diameter must be positive");
  return d2 * 4.0 / kPi;
}

std::size_t Ensemble::index_of(int id) const {
  for (std::size_t i = 0; i < grains.size(); ++i) {
    if (grains[i].id == id) return i;
  }
  throw InvalidArgument("no grain with id " + std::to_string(id));
}

void Ensemble::recompute_twin_fraction() {
  double sum = 0.0;
  for (const auto& g : grains) {
    if (g.is_twin()) sum += g.volume_fraction;
  }
  twin_volume_fraction = sum;
}

void Ensemble::validate() const {
  if (grains.empty()) throw InvalidArgument("ensemble has no grains");
  double sum = 0.0;
  std::set<int> ids;
  for (const auto& g : grains) {
    if (!ids.insert(g.id).second) throw InvalidArgument("duplicate grain id " + std::to_string(g.id));
    if (!(g.diameter_3d > 0.0)) throw InvalidArgument("grain diameter must be positive");
    if (!(g.volume_fraction > 0.0 && g.volume_fraction <= 1.0)) {
      throw InvalidArgument("grain volume fraction must lie in (0, 1]");
    }
    if (g.parent_id && *g.parent_id == g.id) throw InvalidArgument("grain is its own parent");
    sum += g.volume_fraction;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("volume fractions do not sum to 1");
  for (const auto& g : grains) {
    for (int nb : g.neighbors) {
      const auto& other = grain(nb);
      if (std::find(other.neighbors.begin(), other.neighbors.end(), g.id) == other.neighbors.end()) {
        throw InvalidArgument("neighbor relation is not symmetric");
      }
    }
  }
}

std::pair<double, double> lognormal_from_moments(double mean, double sd) {
  if (!(mean > 0.0) || !(sd > 0.0)) throw InvalidArgument("lognormal moments must be positive");
  const double var_log = std::log(1.0 + (sd * sd) / (mean * mean));
  return {std::log(mean) - 0.5 * var_log, std::sqrt(var_log)};
}

namespace {

constexpr double kZ999 = 3.090232306167813;  // standard normal 99.9th percentile

void link(Ensemble& e, int a, int b) {
  if (a == b) return;
  auto& na = e.grains[e.index_of(a)].neighbors;
  auto& nb = e.grains[e.index_of(b)].neighbors;
  if (std::find(na.begin(), na.end(), b) == na.end()) na.push_back(b);
  if (std::find(nb.begin(), nb.end(), a) == nb.end()) nb.push_back(a);
}

double sphere_diameter(double volume_fraction, double reference_fraction, double reference_d) {
  return reference_d * std::cbrt(volume_fraction / reference_fraction);
}

}  // namespace

Ensemble insert_twins(const Ensemble& ensemble, int grain_id, double lamella_fraction,
                      std::uint64_t seed) {
  if (!(lamella_fraction > 0.0 && lamella_fraction < 1.0)) {
    throw InvalidArgument("insert_twins: lamella fraction must lie in (0, 1)");
  }
  Ensemble out = ensemble;
  const std::size_t pi = out.index_of(grain_id);
  if (out.grains[pi].is_twin()) throw InvalidArgument("insert_twins: grain is itself a twin");

  Rng rng(seed);
  static const std::array<Vec3, 4> kAxes = {Vec3(1, 1, 1), Vec3(-1, 1, 1), Vec3(1, -1, 1),
                                            Vec3(1, 1, -1)};
  const Vec3 axis = kAxes[uniform_index(rng, kAxes.size())];

  GrainRecord twin;
  int max_id = 0;
  for (const auto& g : out.grains) max_id = std::max(max_id, g.id);
  twin.id = max_id + 1;
  twin.parent_id = grain_id;

  GrainRecord& parent = out.grains[pi];
  const double vf = parent.volume_fraction;
  const double d = parent.diameter_3d;
  twin.orientation = parent.orientation.compose_crystal(Orientation::from_axis_angle(axis, 60.0));
  twin.volume_fraction = vf * lamella_fraction;
  twin.diameter_3d = sphere_diameter(twin.volume_fraction, vf, d);
  parent.volume_fraction = vf - twin.volume_fraction;
  parent.diameter_3d = sphere_diameter(parent.volume_fraction, vf, d);
  if (parent.center) {
    Vec3 offset(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    twin.center = *parent.center + 1e-3 * offset;
  }

  // A lamella crossing its parent terminates on (up to) two of the parent's boundaries.
  std::vector<int> parent_neighbors = parent.neighbors;
  std::vector<int> touch;
  for (int k = 0; k < 2 && !parent_neighbors.empty(); ++k) {
    const std::size_t j = uniform_index(rng, parent_neighbors.size());
    touch.push_back(parent_neighbors[j]);
    parent_neighbors.erase(parent_neighbors.begin() + static_cast<std::ptrdiff_t>(j));
  }

  out.grains.push_back(std::move(twin));
  const int tid = out.grains.back().id;
  link(out, tid, grain_id);
  for (int nb : touch) link(out, tid, nb);
  out.recompute_twin_fraction();
  return out;
}

Ensemble sample_ensemble(const SizeStats& stats, int n_grains, double twin_target,
                         std::uint64_t seed) {
  if (n_grains < 1) throw InvalidArgument("sample_ensemble: need at least one grain");
  if (!(twin_target >= 0.0 && twin_target <= 0.6)) {
    throw InvalidArgument("sample_ensemble: twin target must lie in [0, 0.6]");
  }
  const double mean3 = diameter_2d_to_3d(stats.mean_2d);
  const double sd3 = stats.sd_2d * 4.0 / kPi;
  const auto [mu, sigma] = lognormal_from_moments(mean3, sd3);
  const double cap = std::exp(mu + sigma * kZ999);

  Rng rng(seed);
  Ensemble e;
  e.seed = seed;
  e.grains.resize(static_cast<std::size_t>(n_grains));
  double total = 0.0;
  for (int i = 0; i < n_grains; ++i) {
    GrainRecord& g = e.grains[static_cast<std::size_t>(i)];
    g.id = i + 1;
    g.diameter_3d = std::min(std::exp(mu + sigma * standard_normal(rng)), cap);
    g.orientation = Orientation::random(rng);
    g.center = Vec3(uniform01(rng), uniform01(rng), uniform01(rng));
    total += g.diameter_3d * g.diameter_3d * g.diameter_3d;
  }
  for (auto& g : e.grains) g.volume_fraction = g.diameter_3d * g.diameter_3d * g.diameter_3d / total;

  const std::size_t k = std::min<std::size_t>(6, static_cast<std::size_t>(n_grains - 1));
  for (std::size_t i = 0; i < e.grains.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(e.grains.size());
    for (std::size_t j = 0; j < e.grains.size(); ++j) {
      if (j == i) continue;
      dist.emplace_back((*e.grains[i].center - *e.grains[j].center).squaredNorm(), j);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t m = 0; m < k; ++m) link(e, e.grains[i].id, e.grains[dist[m].second].id);
  }

  return add_twins(std::move(e), twin_target, seed);
}

Ensemble add_twins(Ensemble e, double twin_target, std::uint64_t seed) {
  if (!(twin_target >= 0.0 && twin_target <= 0.6)) {
    throw InvalidArgument("add_twins: twin target must lie in [0, 0.6]");
  }
  Rng rng(derive_seed(seed, 0x7717));
  e.recompute_twin_fraction();
  const int max_insertions = 20 * static_cast<int>(e.grains.size()) + 20;
  int inserted = 0;
  while (e.twin_volume_fraction < twin_target - 1e-12) {
    if (inserted >= max_insertions) {
      throw InvalidArgument("twin target unreachable with this grain count");
    }
    std::vector<int> hosts;
    for (const auto& g : e.grains) {
      if (!g.is_twin()) hosts.push_back(g.id);
    }
    const int host = hosts[uniform_index(rng, hosts.size())];
    const double host_vf = e.grain(host).volume_fraction;
    double lamella = uniform(rng, 0.2, 0.5);
    const double remaining = twin_target - e.twin_volume_fraction;
    if (lamella * host_vf > remaining) lamella = remaining / host_vf;
    e = insert_twins(e, host, lamella, derive_seed(seed, static_cast<std::uint64_t>(inserted)));
    ++inserted;
  }
  e.seed = seed;
  return e;
}

double average_misorientation(const Ensemble& ensemble, int grain_id) {
  const GrainRecord& g = ensemble.grain(grain_id);
  if (g.neighbors.empty()) {
    throw InvalidArgument("average_misorientation: grain " + std::to_string(grain_id) +
                          " has no neighbors");
  }
  double sum = 0.0;
  for (int nb : g.neighbors) sum += misorientation(g.orientation, ensemble.grain(nb).orientation);
  return sum / static_cast<double>(g.neighbors.size());
}

EmpiricalCdf::EmpiricalCdf(std::vector<double> values) : sorted_(std::move(values)) {
  if (sorted_.empty()) throw InvalidArgument("empirical_cdf: no values");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double x) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

EmpiricalCdf empirical_cdf(std::span<const double> values) {
  return EmpiricalCdf(std::vector<double>(values.begin(), values.end()));
}

void write_ensemble_csv(std::ostream& os, const Ensemble& ensemble,
                        const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "id,phi1_deg,Phi_deg,phi2_deg,diameter_um,volume_fraction,parent_id,neighbors\n";
  for (const auto& g : ensemble.grains) {
    const auto e = g.orientation.to_bunge_deg();
    os << g.id << ',' << format_double(e[0]) << ',' << format_double(e[1]) << ','
       << format_double(e[2]) << ',' << format_double(g.diameter_3d) << ','
       << format_double(g.volume_fraction) << ',';
    if (g.parent_id) os << *g.parent_id;
    os << ',';
    for (std::size_t i = 0; i < g.neighbors.size(); ++i) os << (i ? ";" : "") << g.neighbors[i];
    os << '\n';
  }
}

Ensemble read_ensemble_csv(std::istream& is) {
  const CsvTable table = read_csv(is);
  require_header(table,
                 {"id", "phi1_deg", "Phi_deg", "phi2_deg", "diameter_um", "volume_fraction",
                  "parent_id", "neighbors"},
                 "ensemble CSV");
  Ensemble e;
  for (const auto& row : table.rows) {
    if (row.fields.size() != 8) {
      throw ParseError("line " + std::to_string(row.line) + ": expected 8 fields");
    }
    GrainRecord g;
    g.id = static_cast<int>(parse_int(row.fields[0], row.line));
    g.orientation = Orientation::from_bunge_deg(parse_double(row.fields[1], row.line),
                                                parse_double(row.fields[2], row.line),
                                                parse_double(row.fields[3], row.line));
    g.diameter_3d = parse_double(row.fields[4], row.line);
    g.volume_fraction = parse_double(row.fields[5], row.line);
    if (!row.fields[6].empty()) g.parent_id = static_cast<int>(parse_int(row.fields[6], row.line));
    if (!row.fields[7].empty()) {
      for (const auto& tok : split(row.fields[7], ';')) {
        g.neighbors.push_back(static_cast<int>(parse_int(tok, row.line)));
      }
    }
    e.grains.push_back(std::move(g));
  }
  e.recompute_twin_fraction();
  e.validate();
  return e;
}

}  // namespace cpbo
