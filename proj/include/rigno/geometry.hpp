#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "rigno/errors.hpp"

namespace rigno {

using Index = Eigen::Index;

/// Row-major N x d coordinate matrix.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Axis-aligned box with per-axis periodicity.
struct Domain {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<bool> periodic;

  static Domain unit_square(bool periodic_x = false, bool periodic_y = false);

  Index dim() const { return lower.size(); }
  Eigen::VectorXd extent() const { return upper - lower; }
  bool any_periodic() const;
  bool all_periodic() const;
  void validate() const;
};

struct PointCloud {
  Points coords;
  Domain domain;

  Index size() const { return coords.rows(); }
  Index dim() const { return coords.cols(); }
  /// Checks N >= 3, matching dimensions and that all points lie in the box.
  void validate() const;
};

/// Counter-clockwise vertex triples. Indices refer to the rows of the point
/// set passed to `delaunay`.
struct Triangulation {
  std::vector<std::array<Index, 3>> simplices;
  Index num_points = 0;

  std::size_t size() const { return simplices.size(); }
  /// Unique undirected edges (i < j), sorted.
  std::vector<std::array<Index, 2>> edges() const;
};

/// zeta = 2 (x - lower) / extent - 1, mapping the domain onto [-1, 1]^d.
template <typename Derived>
Points normalize_linear(const Eigen::MatrixBase<Derived>& coords, const Domain& domain) {
  if (coords.cols() != domain.dim()) {
    throw ArgumentError("normalize_linear: coordinate dimension does not match domain");
  }
  const Eigen::RowVectorXd lower = domain.lower.transpose();
  const Eigen::RowVectorXd scale = (2.0 / domain.extent().array()).matrix().transpose();
  Points zeta(coords.rows(), coords.cols());
  for (Index i = 0; i < coords.rows(); ++i) {
    zeta.row(i) = ((coords.row(i).template cast<double>() - lower).array() * scale.array() - 1.0).matrix();
  }
  return zeta;
}

/// Inverse of normalize_linear.
Points denormalize_linear(const Points& zeta, const Domain& domain);

/// alpha = pi (zeta + 1), in [0, 2 pi].
template <typename Derived>
Points angular_coords(const Eigen::MatrixBase<Derived>& zeta) {
  return (M_PI * (zeta.array().template cast<double>() + 1.0)).matrix();
}

/// Node structural features: zeta itself, or for periodic domains the
/// [sin(k alpha), cos(k alpha)] stack for k = 1..k_freq (length 2 d k_freq).
Eigen::VectorXd node_struct_features(const Eigen::VectorXd& zeta, bool periodic, int k_freq);

/// Per-axis variant for a whole cloud: periodic axes get the Fourier
/// encoding, other axes keep zeta. Reduces to node_struct_features when the
/// domain is fully periodic or fully bounded.
Points node_struct_features(const Points& zeta, const Domain& domain, int k_freq);

Index node_feature_width(const Domain& domain, int k_freq);

/// [dz, |dz|] with dz = (zeta_j - zeta_i) / (2 sqrt(d)).
Eigen::VectorXd edge_struct_features(const Eigen::VectorXd& zeta_i, const Eigen::VectorXd& zeta_j);

/// Tolerance on circumcircle containment, relative to the squared circumradius.
inline constexpr double kIncircleTolerance = 1e-12;

/// Planar Delaunay triangulation (Bowyer-Watson). Cocircular ties resolved
/// towards the diagonal incident to the smallest vertex index. Output is
/// canonical: each triple starts at its smallest index, triples sorted.
Triangulation delaunay(const Points& points);

/// Circumcircle test with the documented tolerance: true iff p lies
/// strictly inside the circumcircle of (a, b, c).
bool in_circumcircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                     const Eigen::Vector2d& p, double rel_tol = kIncircleTolerance);

/// overlap * max over incident simplices of the vertex-to-centroid distance.
Eigen::VectorXd support_radii(const Points& points, const Triangulation& tri, double overlap);

struct PeriodicExtension {
  Points coords;                    // original points first, then ghost tiles
  std::vector<Index> origin;        // source row of every extended point
  std::vector<std::array<int, 2>> shift;  // tile offset in units of the extent
};

/// Tiles the cloud 3x along every periodic axis (9N points when fully
/// periodic). Non-periodic domains come back unchanged with an identity map.
PeriodicExtension extend_periodic(const PointCloud& cloud);
PeriodicExtension extend_periodic(const Points& coords, const Domain& domain);

}  // namespace rigno
