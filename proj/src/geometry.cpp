#include "rigno/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rigno {

Domain Domain::unit_square(bool periodic_x, bool periodic_y) {
  Domain d;
  d.lower = Eigen::Vector2d(0.0, 0.0);
  d.upper = Eigen::Vector2d(1.0, 1.0);
  d.periodic = {periodic_x, periodic_y};
  return d;
}

bool Domain::any_periodic() const {
  return std::any_of(periodic.begin(), periodic.end(), [](bool p) { return p; });
}

bool Domain::all_periodic() const {
  return !periodic.empty() && std::all_of(periodic.begin(), periodic.end(), [](bool p) { return p; });
}

void Domain::validate() const {
  if (lower.size() != upper.size() || static_cast<Index>(periodic.size()) != lower.size()) {
    throw ArgumentError("Domain: lower, upper and periodic must have the same length");
  }
  for (Index k = 0; k < lower.size(); ++k) {
    if (!(lower[k] < upper[k])) throw ArgumentError("Domain: lower must be < upper on every axis");
  }
}

void PointCloud::validate() const {
  domain.validate();
  if (coords.cols() != domain.dim()) throw ArgumentError("PointCloud: coordinate dimension mismatch");
  if (coords.rows() < 3) throw ArgumentError("PointCloud: need at least 3 points");
  for (Index i = 0; i < coords.rows(); ++i) {
    for (Index k = 0; k < coords.cols(); ++k) {
      const double x = coords(i, k);
      if (!(x >= domain.lower[k] && x <= domain.upper[k])) {
        throw ArgumentError("PointCloud: point " + std::to_string(i) + " lies outside the domain");
      }
    }
  }
}

std::vector<std::array<Index, 2>> Triangulation::edges() const {
  std::vector<std::array<Index, 2>> out;
  out.reserve(simplices.size() * 3);
  for (const auto& t : simplices) {
    for (int e = 0; e < 3; ++e) {
      Index a = t[e], b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      out.push_back({a, b});
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Points denormalize_linear(const Points& zeta, const Domain& domain) {
  if (zeta.cols() != domain.dim()) throw ArgumentError("denormalize_linear: dimension mismatch");
  Points x(zeta.rows(), zeta.cols());
  const Eigen::VectorXd half = 0.5 * domain.extent();
  for (Index i = 0; i < zeta.rows(); ++i) {
    for (Index k = 0; k < zeta.cols(); ++k) x(i, k) = (zeta(i, k) + 1.0) * half[k] + domain.lower[k];
  }
  return x;
}

Eigen::VectorXd node_struct_features(const Eigen::VectorXd& zeta, bool periodic, int k_freq) {
  if (!periodic) return zeta;
  if (k_freq <= 0) throw ArgumentError("node_struct_features: k_freq must be positive for periodic domains");
  const Index d = zeta.size();
  Eigen::VectorXd out(2 * d * k_freq);
  for (int k = 1; k <= k_freq; ++k) {
    const Index base = 2 * d * (k - 1);
    for (Index j = 0; j < d; ++j) {
      const double alpha = M_PI * (zeta[j] + 1.0);
      out[base + j] = std::sin(k * alpha);
      out[base + d + j] = std::cos(k * alpha);
    }
  }
  return out;
}

Index node_feature_width(const Domain& domain, int k_freq) {
  Index w = 0;
  for (bool p : domain.periodic) w += p ? 2 * k_freq : 1;
  return w;
}

Points node_struct_features(const Points& zeta, const Domain& domain, int k_freq) {
  const Index d = domain.dim();
  if (zeta.cols() != d) throw ArgumentError("node_struct_features: dimension mismatch");
  if (domain.all_periodic() || !domain.any_periodic()) {
    const bool periodic = domain.all_periodic();
    Points out(zeta.rows(), node_feature_width(domain, k_freq));
    for (Index i = 0; i < zeta.rows(); ++i) {
      out.row(i) = node_struct_features(Eigen::VectorXd(zeta.row(i).transpose()), periodic, k_freq).transpose();
    }
    return out;
  }
  // Mixed periodicity: bounded axes first, then the Fourier block of the periodic ones.
  if (k_freq <= 0) throw ArgumentError("node_struct_features: k_freq must be positive for periodic domains");
  std::vector<Index> bounded, periodic;
  for (Index k = 0; k < d; ++k) (domain.periodic[k] ? periodic : bounded).push_back(k);
  const Index dp = static_cast<Index>(periodic.size());
  Points out(zeta.rows(), node_feature_width(domain, k_freq));
  for (Index i = 0; i < zeta.rows(); ++i) {
    Index c = 0;
    for (Index k : bounded) out(i, c++) = zeta(i, k);
    Eigen::VectorXd zp(dp);
    for (Index j = 0; j < dp; ++j) zp[j] = zeta(i, periodic[j]);
    out.row(i).segment(c, 2 * dp * k_freq) = node_struct_features(zp, true, k_freq).transpose();
  }
  return out;
}

Eigen::VectorXd edge_struct_features(const Eigen::VectorXd& zeta_i, const Eigen::VectorXd& zeta_j) {
  if (zeta_i.size() != zeta_j.size()) throw ArgumentError("edge_struct_features: dimension mismatch");
  const Index d = zeta_i.size();
  Eigen::VectorXd out(d + 1);
  out.head(d) = (zeta_j - zeta_i) / (2.0 * std::sqrt(static_cast<double>(d)));
  double sq = 0.0;
  for (Index k = 0; k < d; ++k) sq += out[k] * out[k];
  out[d] = std::sqrt(sq);
  return out;
}

Eigen::VectorXd support_radii(const Points& points, const Triangulation& tri, double overlap) {
  if (!(overlap > 0.0)) throw ArgumentError("support_radii: overlap must be positive");
  const Index n = points.rows();
  Eigen::VectorXd radii = Eigen::VectorXd::Zero(n);
  std::vector<bool> touched(static_cast<std::size_t>(n), false);
  for (const auto& t : tri.simplices) {
    Eigen::RowVectorXd centroid = (points.row(t[0]) + points.row(t[1]) + points.row(t[2])) / 3.0;
    for (Index v : t) {
      if (v < 0 || v >= n) throw ArgumentError("support_radii: simplex index out of range");
      radii[v] = std::max(radii[v], (points.row(v) - centroid).norm());
      touched[static_cast<std::size_t>(v)] = true;
    }
  }
  for (Index i = 0; i < n; ++i) {
    if (!touched[static_cast<std::size_t>(i)]) {
      throw GeometryError("support_radii: node " + std::to_string(i) + " is not a vertex of any simplex");
    }
  }
  return overlap * radii;
}

PeriodicExtension extend_periodic(const Points& coords, const Domain& domain) {
  domain.validate();
  if (coords.cols() != domain.dim()) throw ArgumentError("extend_periodic: dimension mismatch");
  if (domain.dim() != 2) throw ArgumentError("extend_periodic: only 2-D domains are supported");
  const Index n = coords.rows();
  std::vector<int> sx = domain.periodic[0] ? std::vector<int>{0, -1, 1} : std::vector<int>{0};
  std::vector<int> sy = domain.periodic[1] ? std::vector<int>{0, -1, 1} : std::vector<int>{0};
  const Eigen::VectorXd extent = domain.extent();

  PeriodicExtension ext;
  const Index tiles = static_cast<Index>(sx.size() * sy.size());
  ext.coords.resize(n * tiles, 2);
  ext.origin.reserve(static_cast<std::size_t>(n * tiles));
  ext.shift.reserve(static_cast<std::size_t>(n * tiles));
  Index row = 0;
  // The identity tile always comes first so the first n rows are the input.
  for (int oy : sy) {
    for (int ox : sx) {
      for (Index i = 0; i < n; ++i, ++row) {
        ext.coords(row, 0) = coords(i, 0) + ox * extent[0];
        ext.coords(row, 1) = coords(i, 1) + oy * extent[1];
        ext.origin.push_back(i);
        ext.shift.push_back({ox, oy});
      }
    }
  }
  return ext;
}

PeriodicExtension extend_periodic(const PointCloud& cloud) { return extend_periodic(cloud.coords, cloud.domain); }

}  // namespace rigno
