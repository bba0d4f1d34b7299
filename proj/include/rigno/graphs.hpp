#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rigno/geometry.hpp"
#include "rigno/rng.hpp"

namespace rigno {

/// Directed edges with their structural features [dz, |dz|].
struct DirectedEdgeSet {
  std::vector<Index> senders;
  std::vector<Index> receivers;
  Points features;  // E x (d + 1)

  Index size() const { return static_cast<Index>(senders.size()); }
};

struct GraphConfig {
  double subsample_factor = 4.0;
  double overlap_encoder = 1.0;
  double overlap_decoder = 2.0;
  int edge_levels = 6;
  double level_subsample = 2.0;
  int k_freq = 4;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct RegionalGraph {
  PointCloud physical;
  Points regional;                    // R x d coordinates
  std::vector<Index> regional_indices;  // rows of physical; empty after refinement
  Eigen::VectorXd radii_encoder;
  Eigen::VectorXd radii_decoder;
  DirectedEdgeSet p2r;  // sender: physical, receiver: regional
  DirectedEdgeSet r2r;  // both endpoints regional, symmetric
  DirectedEdgeSet r2p;  // sender: regional, receiver: physical
  Points node_feats_phys;  // N x F0
  Points node_feats_reg;   // R x (F0 + 1), last column is the normalized encoder radius
  int levels_built = 0;

  Index num_physical() const { return physical.size(); }
  Index num_regional() const { return regional.rows(); }
};

/// floor(N / factor) distinct physical indices, uniform without replacement.
std::vector<Index> sample_regional(const PointCloud& cloud, double factor, Rng& rng);

/// Edge s -> t iff |x_s - x_t| <= radius_t. Edges are ordered by (target, source).
/// Returned senders index `sources`, receivers index `targets`.
struct RadiusEdges {
  std::vector<Index> sources;
  std::vector<Index> targets;
};
RadiusEdges radius_edges_to_targets(const Points& sources, const Points& targets, const Eigen::VectorXd& radii);

/// Edge s -> t iff |x_s - x_t| <= radius_s (decoder direction).
RadiusEdges radius_edges_from_sources(const Points& sources, const Eigen::VectorXd& radii, const Points& targets);

/// Bounded-domain radius edges with structural features. `into_targets`
/// selects whether the radius belongs to the target (encoder) or the source
/// (decoder) side.
DirectedEdgeSet build_radius_edges(const Points& sources, const Points& targets, const Eigen::VectorXd& radii,
                                   bool radius_at_target, const Domain& domain);

/// Multi-scale regional edges: Delaunay edges of successively subsampled
/// node sets, merged, deduplicated and emitted in both directions.
/// `levels_built` receives the number of levels actually triangulated.
DirectedEdgeSet build_r2r_multiscale(const Points& regional, int levels, double level_subsample, Rng& rng,
                                     const Domain& domain, int* levels_built = nullptr);

/// Node counts of each multi-scale level for R nodes (stops below 3).
std::vector<Index> multiscale_level_sizes(Index num_nodes, int levels, double level_subsample);

struct RefinedMesh {
  Points points;                                // first N rows are the input
  std::vector<std::array<Index, 3>> provenance;  // for every added point, its parent triangle
};

/// Appends centroids of randomly chosen Delaunay triangles until
/// target_count points exist. A fresh triangulation is built per pass.
RefinedMesh refine_mesh(const Points& points, Index target_count, Rng& rng);

/// Full graph assembly with randomly sampled regional nodes.
RegionalGraph build_graph(const PointCloud& cloud, const GraphConfig& cfg, Rng& rng);

/// Graph assembly around given regional coordinates (used for resolution
/// correction and controlled comparisons).
RegionalGraph build_graph_with_regional(const PointCloud& cloud, const Points& regional,
                                        std::vector<Index> regional_indices, const GraphConfig& cfg, Rng& rng);

/// Regional set held at `target_regional` nodes: subsample at cfg.subsample_factor,
/// raising the factor when that gives too many nodes and refining with
/// centroids when it gives too few.
RegionalGraph build_graph_with_regional_count(const PointCloud& cloud, Index target_regional,
                                              const GraphConfig& cfg, Rng& rng);

/// Physical nodes outside every encoder disk.
std::vector<Index> uncovered_by_encoder(const RegionalGraph& graph);

/// Physical nodes that receive no decoder edge.
std::vector<Index> missing_decoder_edges(const RegionalGraph& graph);

/// Structural features of a node set (zeta or Fourier encoding).
Points physical_node_features(const Points& coords, const Domain& domain, int k_freq);

}  // namespace rigno
