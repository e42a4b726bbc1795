#pragma once

// Offline geometrically-necessary-dislocation analysis on voxel grids of Fp.
//
// Curl convention (fixed): (curl A)_ij = e_jkl dA_il/dx_k, i.e. the curl is
// taken row by row. Central differences are used in the interior and
// first-order one-sided differences on the boundary faces. The Nye tensor is
// identified with curl Fp, in 1/um for spacing in um.

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "cpbo/io.hpp"
#include "cpbo/slip_crystal.hpp"

namespace cpbo {

struct VoxelField {
  std::array<int, 3> dims{1, 1, 1};
  double spacing = 1.0;  // um
  std::vector<Mat3> fp;  // x fastest, then y, then z

  VoxelField() = default;
  VoxelField(std::array<int, 3> d, double h);

  std::size_t size() const { return fp.size(); }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }
  Mat3& at(int i, int j, int k) { return fp[index(i, j, k)]; }
  const Mat3& at(int i, int j, int k) const { return fp[index(i, j, k)]; }
  Vec3 position(int i, int j, int k) const { return spacing * Vec3(i, j, k); }
  void validate() const;
};

/// Per-voxel curl. Every direction is differentiated, so each needs at least
/// two voxels; InvalidArgument otherwise.
std::vector<Mat3> curl_fp(const VoxelField& field);

struct GndProjection {
  SlipArray rho_edge{};
  SlipArray rho_screw{};
  double residual = 0.0;
};

/// 9 x 24 matrix whose columns are b (s (x) t) for edge and b (s (x) s) for
/// screw densities, edge columns first.
Eigen::Matrix<double, 9, 24> gnd_basis(const SlipSystemSet& systems, double burgers);

/// Signed minimal-norm least-squares densities (edge then screw).
Eigen::Matrix<double, 24, 1> solve_gnd_signed(const Mat3& nye, const SlipSystemSet& systems,
                                              double burgers);

/// Minimal-norm SVD pseudo-inverse projection; returns magnitudes and the
/// Frobenius norm of the unexplained part of `nye`.
GndProjection project_gnd(const Mat3& nye, const SlipSystemSet& systems, double burgers);

/// Nye tensor produced by signed edge/screw density vectors.
Mat3 synthesize_nye(const SlipArray& rho_edge, const SlipArray& rho_screw,
                    const SlipSystemSet& systems, double burgers);

enum class ProjectionMode { kEdge, kScrew, kMean };

/// rho_for^a = sum_b |n^a . l^b| rho_tot^b with l^b chosen by `mode`.
SlipArray forest_sum(const SlipArray& rho_tot, const SlipSystemSet& systems, ProjectionMode mode);

struct GndResult {
  std::vector<Mat3> nye;
  std::vector<GndProjection> projection;
};

/// Curl followed by per-voxel projection. Without `crystal_to_sample`, Fp and
/// the slip systems share one frame; otherwise Fp is in the sample frame and
/// each voxel's Nye tensor is rotated into its own crystal frame first.
GndResult analyze_gnd(const VoxelField& field, const SlipSystemSet& systems, double burgers,
                      std::span<const Mat3> crystal_to_sample = {});

void write_field_csv(std::ostream& os, const VoxelField& field,
                     const std::optional<Provenance>& prov = std::nullopt);
VoxelField read_field_csv(std::istream& is, double spacing);
void write_gnd_csv(std::ostream& os, const VoxelField& field, const GndResult& result,
                   const std::optional<Provenance>& prov = std::nullopt);

}  // namespace cpbo
