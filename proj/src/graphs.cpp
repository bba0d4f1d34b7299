#include "rigno/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <tuple>

namespace rigno {
namespace {

// Uniform bucket grid over a point set for fixed-radius queries.
class BucketGrid {
 public:
  BucketGrid(const Points& pts, double cell) : pts_(pts) {
    lo_ = pts.colwise().minCoeff().transpose();
    Eigen::Vector2d hi = pts.colwise().maxCoeff().transpose();
    cell_ = std::max(cell, 1e-12);
    nx_ = std::max<Index>(1, static_cast<Index>(std::floor((hi.x() - lo_.x()) / cell_)) + 1);
    ny_ = std::max<Index>(1, static_cast<Index>(std::floor((hi.y() - lo_.y()) / cell_)) + 1);
    // Guard against absurd grids when one radius is tiny relative to the extent.
    while (nx_ * ny_ > 4 * pts.rows() + 16) {
      cell_ *= 2.0;
      nx_ = std::max<Index>(1, static_cast<Index>(std::floor((hi.x() - lo_.x()) / cell_)) + 1);
      ny_ = std::max<Index>(1, static_cast<Index>(std::floor((hi.y() - lo_.y()) / cell_)) + 1);
    }
    start_.assign(static_cast<std::size_t>(nx_ * ny_ + 1), 0);
    std::vector<Index> cell_of(static_cast<std::size_t>(pts.rows()));
    for (Index i = 0; i < pts.rows(); ++i) {
      cell_of[i] = cell_index(pts(i, 0), pts(i, 1));
      ++start_[cell_of[i] + 1];
    }
    std::partial_sum(start_.begin(), start_.end(), start_.begin());
    items_.resize(static_cast<std::size_t>(pts.rows()));
    std::vector<Index> fill(start_.begin(), start_.end() - 1);
    for (Index i = 0; i < pts.rows(); ++i) items_[fill[cell_of[i]]++] = i;
  }

  // Appends indices of points within `radius` of (x, y), unsorted.
  void query(double x, double y, double radius, std::vector<Index>& out) const {
    const double r2 = radius * radius;
    const Index ix0 = clampx(static_cast<Index>(std::floor((x - radius - lo_.x()) / cell_)));
    const Index ix1 = clampx(static_cast<Index>(std::floor((x + radius - lo_.x()) / cell_)));
    const Index iy0 = clampy(static_cast<Index>(std::floor((y - radius - lo_.y()) / cell_)));
    const Index iy1 = clampy(static_cast<Index>(std::floor((y + radius - lo_.y()) / cell_)));
    for (Index iy = iy0; iy <= iy1; ++iy) {
      for (Index ix = ix0; ix <= ix1; ++ix) {
        const Index c = iy * nx_ + ix;
        for (Index k = start_[c]; k < start_[c + 1]; ++k) {
          const Index i = items_[k];
          const double dx = pts_(i, 0) - x, dy = pts_(i, 1) - y;
          if (dx * dx + dy * dy <= r2) out.push_back(i);
        }
      }
    }
  }

 private:
  const Points& pts_;
  Eigen::Vector2d lo_;
  double cell_;
  Index nx_, ny_;
  std::vector<Index> start_, items_;

  Index clampx(Index i) const { return std::clamp<Index>(i, 0, nx_ - 1); }
  Index clampy(Index i) const { return std::clamp<Index>(i, 0, ny_ - 1); }
  Index cell_index(double x, double y) const {
    return clampy(static_cast<Index>(std::floor((y - lo_.y()) / cell_))) * nx_ +
           clampx(static_cast<Index>(std::floor((x - lo_.x()) / cell_)));
  }
};

double median_of(Eigen::VectorXd v) {
  std::sort(v.data(), v.data() + v.size());
  return v.size() ? v[v.size() / 2] : 0.0;
}

struct EdgeCandidate {
  Index receiver;
  Index sender;
  Eigen::Vector2d delta;  // x_receiver - x_sender, unwrapped
};

// Deduplicate by (sender, receiver) keeping the shortest relative vector,
// then assemble features in (receiver, sender) order.
DirectedEdgeSet assemble(std::vector<EdgeCandidate> cands, const Domain& domain) {
  std::stable_sort(cands.begin(), cands.end(), [](const EdgeCandidate& a, const EdgeCandidate& b) {
    if (a.receiver != b.receiver) return a.receiver < b.receiver;
    if (a.sender != b.sender) return a.sender < b.sender;
    return a.delta.squaredNorm() < b.delta.squaredNorm();
  });
  DirectedEdgeSet out;
  std::vector<Eigen::Vector2d> deltas;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (i > 0 && cands[i].receiver == cands[i - 1].receiver && cands[i].sender == cands[i - 1].sender) continue;
    out.senders.push_back(cands[i].sender);
    out.receivers.push_back(cands[i].receiver);
    deltas.push_back(cands[i].delta);
  }
  const Eigen::VectorXd scale = 2.0 / domain.extent().array();
  const double diameter = 2.0 * std::sqrt(static_cast<double>(domain.dim()));
  out.features.resize(static_cast<Index>(deltas.size()), 3);
  for (std::size_t e = 0; e < deltas.size(); ++e) {
    // zeta_j - zeta_i for the affine zeta map is scale * (x_j - x_i).
    const Eigen::Vector2d dz(deltas[e].x() * scale[0] / diameter, deltas[e].y() * scale[1] / diameter);
    out.features(static_cast<Index>(e), 0) = dz.x();
    out.features(static_cast<Index>(e), 1) = dz.y();
    out.features(static_cast<Index>(e), 2) = std::sqrt(dz.x() * dz.x() + dz.y() * dz.y());
  }
  return out;
}

}  // namespace

void GraphConfig::validate() const {
  if (!(subsample_factor >= 1.0)) throw ConfigError("subsample_factor must be >= 1");
  if (!(overlap_encoder > 0.0) || !(overlap_decoder > 0.0)) throw ConfigError("overlap factors must be positive");
  if (edge_levels < 1) throw ConfigError("edge_levels must be >= 1");
  if (!(level_subsample > 1.0)) throw ConfigError("level_subsample must be > 1");
  if (k_freq < 1) throw ConfigError("k_freq must be >= 1");
}

std::vector<Index> sample_regional(const PointCloud& cloud, double factor, Rng& rng) {
  if (!(factor >= 1.0)) throw ConfigError("sample_regional: factor must be >= 1");
  const Index n = cloud.size();
  const auto r = static_cast<Index>(std::floor(static_cast<double>(n) / factor));
  if (r < 3) throw ConfigError("sample_regional: fewer than 3 regional nodes (N=" + std::to_string(n) + ")");
  auto drawn = sample_without_replacement(n, r, rng);
  std::vector<Index> idx(drawn.begin(), drawn.end());
  std::sort(idx.begin(), idx.end());
  return idx;
}

RadiusEdges radius_edges_to_targets(const Points& sources, const Points& targets, const Eigen::VectorXd& radii) {
  if (radii.size() != targets.rows()) throw ArgumentError("radius edges: one radius per target required");
  if (sources.rows() == 0 || targets.rows() == 0) return {};
  if ((radii.array() <= 0.0).any()) throw ArgumentError("radius edges: radii must be positive");
  BucketGrid grid(sources, median_of(radii));
  std::vector<std::vector<Index>> hits(static_cast<std::size_t>(targets.rows()));
#pragma omp parallel for schedule(dynamic, 64)
  for (Index t = 0; t < targets.rows(); ++t) {
    grid.query(targets(t, 0), targets(t, 1), radii[t], hits[t]);
    std::sort(hits[t].begin(), hits[t].end());
  }
  RadiusEdges out;
  for (Index t = 0; t < targets.rows(); ++t) {
    for (Index s : hits[t]) {
      out.sources.push_back(s);
      out.targets.push_back(t);
    }
  }
  return out;
}

RadiusEdges radius_edges_from_sources(const Points& sources, const Eigen::VectorXd& radii, const Points& targets) {
  if (radii.size() != sources.rows()) throw ArgumentError("radius edges: one radius per source required");
  if (sources.rows() == 0 || targets.rows() == 0) return {};
  if ((radii.array() <= 0.0).any()) throw ArgumentError("radius edges: radii must be positive");
  BucketGrid grid(targets, median_of(radii));
  std::vector<std::vector<Index>> hits(static_cast<std::size_t>(sources.rows()));
#pragma omp parallel for schedule(dynamic, 64)
  for (Index s = 0; s < sources.rows(); ++s) grid.query(sources(s, 0), sources(s, 1), radii[s], hits[s]);
  std::vector<std::pair<Index, Index>> pairs;  // (target, source)
  for (Index s = 0; s < sources.rows(); ++s) {
    for (Index t : hits[s]) pairs.emplace_back(t, s);
  }
  std::sort(pairs.begin(), pairs.end());
  RadiusEdges out;
  out.sources.reserve(pairs.size());
  out.targets.reserve(pairs.size());
  for (const auto& [t, s] : pairs) {
    out.sources.push_back(s);
    out.targets.push_back(t);
  }
  return out;
}

DirectedEdgeSet build_radius_edges(const Points& sources, const Points& targets, const Eigen::VectorXd& radii,
                                   bool radius_at_target, const Domain& domain) {
  const RadiusEdges raw = radius_at_target ? radius_edges_to_targets(sources, targets, radii)
                                           : radius_edges_from_sources(sources, radii, targets);
  std::vector<EdgeCandidate> cands;
  cands.reserve(raw.sources.size());
  for (std::size_t e = 0; e < raw.sources.size(); ++e) {
    const Index s = raw.sources[e], t = raw.targets[e];
    cands.push_back({t, s, Eigen::Vector2d(targets(t, 0) - sources(s, 0), targets(t, 1) - sources(s, 1))});
  }
  return assemble(std::move(cands), domain);
}

std::vector<Index> multiscale_level_sizes(Index num_nodes, int levels, double level_subsample) {
  std::vector<Index> sizes;
  Index n = num_nodes;
  for (int l = 0; l < levels && n >= 3; ++l) {
    sizes.push_back(n);
    n = static_cast<Index>(std::floor(static_cast<double>(n) / level_subsample));
  }
  return sizes;
}

DirectedEdgeSet build_r2r_multiscale(const Points& regional, int levels, double level_subsample, Rng& rng,
                                     const Domain& domain, int* levels_built) {
  const Index r = regional.rows();
  if (r < 3) throw ArgumentError("build_r2r_multiscale: need at least 3 regional nodes");
  std::vector<Index> current(static_cast<std::size_t>(r));
  std::iota(current.begin(), current.end(), Index{0});

  std::vector<EdgeCandidate> cands;
  int built = 0;
  for (int level = 0; level < levels && current.size() >= 3; ++level) {
    Points sub(static_cast<Index>(current.size()), 2);
    for (std::size_t i = 0; i < current.size(); ++i) sub.row(static_cast<Index>(i)) = regional.row(current[i]);
    const PeriodicExtension ext = extend_periodic(sub, domain);
    const Triangulation tri = delaunay(ext.coords);
    const auto m = static_cast<Index>(current.size());
    for (const auto& [a, b] : tri.edges()) {
      if (a >= m && b >= m) continue;  // ghost-only edge; its twin touches the original tile
      const Index ra = current[ext.origin[a]], rb = current[ext.origin[b]];
      if (ra == rb) continue;
      const Eigen::Vector2d delta(ext.coords(b, 0) - ext.coords(a, 0), ext.coords(b, 1) - ext.coords(a, 1));
      cands.push_back({rb, ra, delta});
      cands.push_back({ra, rb, -delta});
    }
    ++built;
    const auto next = static_cast<Index>(std::floor(static_cast<double>(current.size()) / level_subsample));
    if (next < 3 || level + 1 >= levels) break;
    auto pick = sample_without_replacement(static_cast<std::int64_t>(current.size()), next, rng);
    std::vector<Index> subset;
    subset.reserve(pick.size());
    for (auto p : pick) subset.push_back(current[static_cast<std::size_t>(p)]);
    std::sort(subset.begin(), subset.end());
    current = std::move(subset);
  }
  if (levels_built) *levels_built = built;
  return assemble(std::move(cands), domain);
}

RefinedMesh refine_mesh(const Points& points, Index target_count, Rng& rng) {
  if (target_count < points.rows()) throw ArgumentError("refine_mesh: target_count must be >= N");
  RefinedMesh out;
  out.points = points;
  while (out.points.rows() < target_count) {
    const Triangulation tri = delaunay(out.points);
    const Index need = target_count - out.points.rows();
    const Index take = std::min<Index>(need, static_cast<Index>(tri.size()));
    const auto pick = sample_without_replacement(static_cast<std::int64_t>(tri.size()), take, rng);
    const Index base = out.points.rows();
    out.points.conservativeResize(base + take, Eigen::NoChange);
    for (Index k = 0; k < take; ++k) {
      const auto& t = tri.simplices[static_cast<std::size_t>(pick[k])];
      out.points.row(base + k) = (out.points.row(t[0]) + out.points.row(t[1]) + out.points.row(t[2])) / 3.0;
      out.provenance.push_back(t);
    }
  }
  return out;
}

Points physical_node_features(const Points& coords, const Domain& domain, int k_freq) {
  return node_struct_features(normalize_linear(coords, domain), domain, k_freq);
}

RegionalGraph build_graph_with_regional(const PointCloud& cloud, const Points& regional,
                                        std::vector<Index> regional_indices, const GraphConfig& cfg, Rng& rng) {
  cfg.validate();
  cloud.validate();
  if (cloud.dim() != 2) throw ArgumentError("build_graph: only 2-D clouds are supported");
  if (regional.rows() < 3) throw ConfigError("build_graph: fewer than 3 regional nodes");

  RegionalGraph g;
  g.physical = cloud;
  g.regional = regional;
  g.regional_indices = std::move(regional_indices);
  const Domain& domain = cloud.domain;
  const Index r = regional.rows();

  // Support radii from the (possibly tiled) regional triangulation.
  const PeriodicExtension ext = extend_periodic(regional, domain);
  const Triangulation tri = delaunay(ext.coords);
  const Eigen::VectorXd base_ext = support_radii(ext.coords, tri, 1.0);
  Eigen::VectorXd base = base_ext.head(r);

  // Physical nodes outside the regional hull can miss every median disk.
  // Grow the nearest regional node's base radius until its encoder disk
  // reaches them, so the union of encoder disks covers the cloud.
  const Index m = ext.coords.rows();
  Eigen::VectorXd enc_ext(m), dec_ext(m);
  auto spread = [&] {
    for (Index j = 0; j < m; ++j) enc_ext[j] = cfg.overlap_encoder * base[ext.origin[j]];
  };
  spread();
  RadiusEdges enc_raw = radius_edges_to_targets(cloud.coords, ext.coords, enc_ext);
  {
    std::vector<char> seen(static_cast<std::size_t>(cloud.size()), 0);
    for (Index p : enc_raw.sources) seen[p] = 1;
    bool grown = false;
    for (Index p = 0; p < cloud.size(); ++p) {
      if (seen[p]) continue;
      Index best = 0;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < m; ++j) {
        const double dx = ext.coords(j, 0) - cloud.coords(p, 0), dy = ext.coords(j, 1) - cloud.coords(p, 1);
        if (dx * dx + dy * dy < best_d2) {
          best_d2 = dx * dx + dy * dy;
          best = j;
        }
      }
      const Index o = ext.origin[best];
      base[o] = std::max(base[o], std::sqrt(best_d2) * (1.0 + 1e-12) / cfg.overlap_encoder);
      grown = true;
    }
    if (grown) {
      spread();
      enc_raw = radius_edges_to_targets(cloud.coords, ext.coords, enc_ext);
    }
  }
  g.radii_encoder = cfg.overlap_encoder * base;
  g.radii_decoder = cfg.overlap_decoder * base;
  for (Index j = 0; j < m; ++j) dec_ext[j] = g.radii_decoder[ext.origin[j]];

  {
    const RadiusEdges& raw = enc_raw;
    std::vector<EdgeCandidate> cands;
    cands.reserve(raw.sources.size());
    for (std::size_t e = 0; e < raw.sources.size(); ++e) {
      const Index p = raw.sources[e], j = raw.targets[e];
      cands.push_back({ext.origin[j], p,
                       Eigen::Vector2d(ext.coords(j, 0) - cloud.coords(p, 0), ext.coords(j, 1) - cloud.coords(p, 1))});
    }
    g.p2r = assemble(std::move(cands), domain);
  }
  {
    const RadiusEdges raw = radius_edges_from_sources(ext.coords, dec_ext, cloud.coords);
    std::vector<EdgeCandidate> cands;
    cands.reserve(raw.sources.size());
    for (std::size_t e = 0; e < raw.sources.size(); ++e) {
      const Index j = raw.sources[e], p = raw.targets[e];
      cands.push_back({p, ext.origin[j],
                       Eigen::Vector2d(cloud.coords(p, 0) - ext.coords(j, 0), cloud.coords(p, 1) - ext.coords(j, 1))});
    }
    g.r2p = assemble(std::move(cands), domain);
  }
  g.r2r = build_r2r_multiscale(regional, cfg.edge_levels, cfg.level_subsample, rng, domain, &g.levels_built);

  g.node_feats_phys = physical_node_features(cloud.coords, domain, cfg.k_freq);
  const Points reg_feats = physical_node_features(regional, domain, cfg.k_freq);
  g.node_feats_reg.resize(r, reg_feats.cols() + 1);
  g.node_feats_reg.leftCols(reg_feats.cols()) = reg_feats;
  g.node_feats_reg.col(reg_feats.cols()) = g.radii_encoder / domain.extent().norm();

  const auto missing = missing_decoder_edges(g);
  if (!missing.empty()) {
    throw ConstructionError("build_graph: physical node " + std::to_string(missing.front()) +
                                " receives no decoder edge (overlap_decoder too small)",
                            missing.front());
  }
  return g;
}

RegionalGraph build_graph(const PointCloud& cloud, const GraphConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto idx = sample_regional(cloud, cfg.subsample_factor, rng);
  Points regional(static_cast<Index>(idx.size()), cloud.dim());
  for (std::size_t i = 0; i < idx.size(); ++i) regional.row(static_cast<Index>(i)) = cloud.coords.row(idx[i]);
  return build_graph_with_regional(cloud, regional, idx, cfg, rng);
}

RegionalGraph build_graph_with_regional_count(const PointCloud& cloud, Index target_regional,
                                              const GraphConfig& cfg, Rng& rng) {
  const Index n = cloud.size();
  const auto natural = static_cast<Index>(std::floor(static_cast<double>(n) / cfg.subsample_factor));
  if (natural >= target_regional) {
    // Super-resolution: a larger subsampling factor keeps the regional count.
    auto drawn = sample_without_replacement(n, target_regional, rng);
    std::vector<Index> idx(drawn.begin(), drawn.end());
    std::sort(idx.begin(), idx.end());
    Points regional(target_regional, cloud.dim());
    for (Index i = 0; i < target_regional; ++i) regional.row(i) = cloud.coords.row(idx[i]);
    return build_graph_with_regional(cloud, regional, idx, cfg, rng);
  }
  // Sub-resolution: refine the subsampled regional mesh with centroids.
  const auto idx = sample_regional(cloud, cfg.subsample_factor, rng);
  Points regional(static_cast<Index>(idx.size()), cloud.dim());
  for (std::size_t i = 0; i < idx.size(); ++i) regional.row(static_cast<Index>(i)) = cloud.coords.row(idx[i]);
  RefinedMesh refined = refine_mesh(regional, target_regional, rng);
  return build_graph_with_regional(cloud, refined.points, {}, cfg, rng);
}

std::vector<Index> uncovered_by_encoder(const RegionalGraph& graph) {
  std::vector<char> seen(static_cast<std::size_t>(graph.num_physical()), 0);
  for (Index s : graph.p2r.senders) seen[s] = 1;
  std::vector<Index> out;
  for (Index i = 0; i < graph.num_physical(); ++i) {
    if (!seen[i]) out.push_back(i);
  }
  return out;
}

std::vector<Index> missing_decoder_edges(const RegionalGraph& graph) {
  std::vector<char> seen(static_cast<std::size_t>(graph.num_physical()), 0);
  for (Index t : graph.r2p.receivers) seen[t] = 1;
  std::vector<Index> out;
  for (Index i = 0; i < graph.num_physical(); ++i) {
    if (!seen[i]) out.push_back(i);
  }
  return out;
}

}  // namespace rigno
