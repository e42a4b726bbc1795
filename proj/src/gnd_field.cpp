#include "cpbo/gnd_field.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "cpbo/parallel.hpp"

namespace cpbo {

namespace {

using Basis = Eigen::Matrix<double, 9, 24>;
using PseudoInverse = Eigen::Matrix<double, 24, 9>;

Eigen::Matrix<double, 9, 1> flatten(const Mat3& m) {
  Eigen::Matrix<double, 9, 1> v;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) v(3 * i + j) = m(i, j);
  }
  return v;
}

PseudoInverse pseudo_inverse(const Basis& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(a), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = 1e-12 * sv(0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

GndProjection project_with(const Mat3& nye, const Basis& a, const PseudoInverse& pinv) {
  const Eigen::Matrix<double, 9, 1> b = flatten(nye);
  const Eigen::Matrix<double, 24, 1> x = pinv * b;
  GndProjection out;
  for (std::size_t s = 0; s < kNumSlip; ++s) {
    out.rho_edge[s] = std::abs(x(static_cast<Eigen::Index>(s)));
    out.rho_screw[s] = std::abs(x(static_cast<Eigen::Index>(s + kNumSlip)));
  }
  out.residual = (a * x - b).norm();
  return out;
}

}  // namespace

VoxelField::VoxelField(std::array<int, 3> d, double h)
    : dims(d), spacing(h), fp(static_cast<std::size_t>(d[0]) * d[1] * d[2], Mat3::Identity()) {}

void VoxelField::validate() const {
  if (!(spacing > 0.0)) throw InvalidArgument("voxel field: spacing must be positive");
  for (int d : dims) {
    if (d < 2) throw InvalidArgument("voxel field: every dimension needs at least 2 voxels");
  }
  if (fp.size() != static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]) {
    throw InvalidArgument("voxel field: data size does not match dimensions");
  }
}

std::vector<Mat3> curl_fp(const VoxelField& field) {
  field.validate();
  const auto [nx, ny, nz] = field.dims;
  const double h = field.spacing;
  std::vector<Mat3> out(field.size(), Mat3::Zero());

  // d/dx_k of the whole tensor at (i, j, k).
  auto derivative = [&](int i, int j, int k, int axis) -> Mat3 {
    std::array<int, 3> p{i, j, k};
    const int n = field.dims[static_cast<std::size_t>(axis)];
    std::array<int, 3> lo = p;
    std::array<int, 3> hi = p;
    double span = 2.0 * h;
    if (p[static_cast<std::size_t>(axis)] == 0) {
      hi[static_cast<std::size_t>(axis)] += 1;
      span = h;
    } else if (p[static_cast<std::size_t>(axis)] == n - 1) {
      lo[static_cast<std::size_t>(axis)] -= 1;
      span = h;
    } else {
      lo[static_cast<std::size_t>(axis)] -= 1;
      hi[static_cast<std::size_t>(axis)] += 1;
    }
    return (field.at(hi[0], hi[1], hi[2]) - field.at(lo[0], lo[1], lo[2])) / span;
  };

  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const std::array<Mat3, 3> d = {derivative(i, j, k, 0), derivative(i, j, k, 1),
                                       derivative(i, j, k, 2)};
        Mat3 c;
        // (curl A)_ij = e_jkl dA_il/dx_k
        for (int r = 0; r < 3; ++r) {
          c(r, 0) = d[1](r, 2) - d[2](r, 1);
          c(r, 1) = d[2](r, 0) - d[0](r, 2);
          c(r, 2) = d[0](r, 1) - d[1](r, 0);
        }
        out[field.index(i, j, k)] = c;
      }
    }
  }
  return out;
}

Eigen::Matrix<double, 9, 24> gnd_basis(const SlipSystemSet& systems, double burgers) {
  Basis a;
  for (std::size_t s = 0; s < kNumSlip; ++s) {
    const Mat3 edge = burgers * systems[s].s * systems[s].t.transpose();
    const Mat3 screw = burgers * systems[s].s * systems[s].s.transpose();
    a.col(static_cast<Eigen::Index>(s)) = flatten(edge);
    a.col(static_cast<Eigen::Index>(s + kNumSlip)) = flatten(screw);
  }
  return a;
}

Eigen::Matrix<double, 24, 1> solve_gnd_signed(const Mat3& nye, const SlipSystemSet& systems,
                                              double burgers) {
  return pseudo_inverse(gnd_basis(systems, burgers)) * flatten(nye);
}

GndProjection project_gnd(const Mat3& nye, const SlipSystemSet& systems, double burgers) {
  const Basis a = gnd_basis(systems, burgers);
  return project_with(nye, a, pseudo_inverse(a));
}

Mat3 synthesize_nye(const SlipArray& rho_edge, const SlipArray& rho_screw,
                    const SlipSystemSet& systems, double burgers) {
  Mat3 nye = Mat3::Zero();
  for (std::size_t s = 0; s < kNumSlip; ++s) {
    nye += burgers * (rho_edge[s] * systems[s].s * systems[s].t.transpose() +
                      rho_screw[s] * systems[s].s * systems[s].s.transpose());
  }
  return nye;
}

SlipArray forest_sum(const SlipArray& rho_tot, const SlipSystemSet& systems, ProjectionMode mode) {
  SlipArray out{};
  for (std::size_t a = 0; a < kNumSlip; ++a) {
    if (rho_tot[a] < 0.0) throw InvalidArgument("forest_sum: densities must be nonnegative");
  }
  for (std::size_t a = 0; a < kNumSlip; ++a) {
    double sum = 0.0;
    for (std::size_t b = 0; b < kNumSlip; ++b) {
      double xi = 0.0;
      switch (mode) {
        case ProjectionMode::kEdge:
          xi = systems.xi_edge(a, b);
          break;
        case ProjectionMode::kScrew:
          xi = systems.xi_screw(a, b);
          break;
        case ProjectionMode::kMean:
          xi = 0.5 * (systems.xi_edge(a, b) + systems.xi_screw(a, b));
          break;
      }
      sum += xi * rho_tot[b];
    }
    out[a] = sum;
  }
  return out;
}

GndResult analyze_gnd(const VoxelField& field, const SlipSystemSet& systems, double burgers,
                      std::span<const Mat3> crystal_to_sample) {
  if (!crystal_to_sample.empty() && crystal_to_sample.size() != field.size()) {
    throw InvalidArgument("analyze_gnd: one rotation per voxel is required");
  }
  GndResult result;
  result.nye = curl_fp(field);
  result.projection.resize(field.size());
  const Basis a = gnd_basis(systems, burgers);
  const PseudoInverse pinv = pseudo_inverse(a);
  parallel_for(field.size(), [&](std::size_t v) {
    Mat3 nye = result.nye[v];
    if (!crystal_to_sample.empty()) {
      const Mat3& r = crystal_to_sample[v];
      nye = r.transpose() * nye * r;
    }
    result.projection[v] = project_with(nye, a, pinv);
  });
  return result;
}

void write_field_csv(std::ostream& os, const VoxelField& field, const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "i,j,k,fp11,fp12,fp13,fp21,fp22,fp23,fp31,fp32,fp33\n";
  for (int k = 0; k < field.dims[2]; ++k) {
    for (int j = 0; j < field.dims[1]; ++j) {
      for (int i = 0; i < field.dims[0]; ++i) {
        os << i << ',' << j << ',' << k;
        const Mat3& m = field.at(i, j, k);
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) os << ',' << format_double(m(r, c));
        }
        os << '\n';
      }
    }
  }
}

VoxelField read_field_csv(std::istream& is, double spacing) {
  const CsvTable table = read_csv(is);
  require_header(table,
                 {"i", "j", "k", "fp11", "fp12", "fp13", "fp21", "fp22", "fp23", "fp31", "fp32", "fp33"},
                 "voxel field CSV");
  std::array<int, 3> dims{0, 0, 0};
  for (const auto& row : table.rows) {
    if (row.fields.size() != 12) throw ParseError("line " + std::to_string(row.line) + ": expected 12 fields");
    for (int d = 0; d < 3; ++d) {
      const auto v = parse_int(row.fields[static_cast<std::size_t>(d)], row.line);
      if (v < 0) throw ParseError("line " + std::to_string(row.line) + ": negative voxel index");
      dims[static_cast<std::size_t>(d)] = std::max(dims[static_cast<std::size_t>(d)], static_cast<int>(v) + 1);
    }
  }
  VoxelField field(dims, spacing);
  std::vector<bool> seen(field.size(), false);
  for (const auto& row : table.rows) {
    const int i = static_cast<int>(parse_int(row.fields[0], row.line));
    const int j = static_cast<int>(parse_int(row.fields[1], row.line));
    const int k = static_cast<int>(parse_int(row.fields[2], row.line));
    Mat3 m;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        m(r, c) = parse_double(row.fields[static_cast<std::size_t>(3 + 3 * r + c)], row.line);
      }
    }
    field.at(i, j, k) = m;
    seen[field.index(i, j, k)] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ParseError("voxel field CSV does not cover every voxel of its bounding grid");
  }
  field.validate();
  return field;
}

void write_gnd_csv(std::ostream& os, const VoxelField& field, const GndResult& result,
                   const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "i,j,k";
  for (std::size_t s = 1; s <= kNumSlip; ++s) os << ",rho_e" << s;
  for (std::size_t s = 1; s <= kNumSlip; ++s) os << ",rho_s" << s;
  os << ",residual\n";
  for (int k = 0; k < field.dims[2]; ++k) {
    for (int j = 0; j < field.dims[1]; ++j) {
      for (int i = 0; i < field.dims[0]; ++i) {
        const GndProjection& p = result.projection[field.index(i, j, k)];
        os << i << ',' << j << ',' << k;
        for (double v : p.rho_edge) os << ',' << format_double(v);
        for (double v : p.rho_screw) os << ',' << format_double(v);
        os << ',' << format_double(p.residual) << '\n';
      }
    }
  }
}

}  // namespace cpbo
