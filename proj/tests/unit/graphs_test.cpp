#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "rigno/graphs.hpp"
#include "test_util.hpp"

using namespace rigno;

namespace {

PointCloud random_cloud(Index n, Rng& rng, bool px = false, bool py = false) {
  return {testutil::random_points(n, rng), Domain::unit_square(px, py)};
}

std::set<std::pair<Index, Index>> pair_set(const DirectedEdgeSet& e) {
  std::set<std::pair<Index, Index>> s;
  for (Index k = 0; k < e.size(); ++k) s.insert({e.senders[k], e.receivers[k]});
  return s;
}

}  // namespace

TEST(SampleRegional, Sizes) {
  Rng rng(1);
  PointCloud c = random_cloud(16384, rng);
  Rng r1(7);
  const auto idx = sample_regional(c, 4.0, r1);
  EXPECT_EQ(idx.size(), 4096u);
  EXPECT_EQ(std::set<Index>(idx.begin(), idx.end()).size(), 4096u);
  Rng r2(7);
  EXPECT_EQ(sample_regional(c, 4.0, r2), idx);
  Rng r3(8);
  EXPECT_NE(sample_regional(c, 4.0, r3), idx);
}

TEST(SampleRegional, FactorOneAndTooFew) {
  Rng rng(2);
  PointCloud c = random_cloud(20, rng);
  auto idx = sample_regional(c, 1.0, rng);
  std::sort(idx.begin(), idx.end());
  for (Index i = 0; i < 20; ++i) EXPECT_EQ(idx[i], i);
  EXPECT_THROW(sample_regional(c, 8.0, rng), ConfigError);
  EXPECT_THROW(sample_regional(c, 0.5, rng), ConfigError);
}

TEST(RadiusEdges, BoundaryInclusive) {
  Points targets(1, 2);
  targets << 0, 0;
  Points sources(3, 2);
  sources << 0.3, 0, 0, 0.5, -0.7, 0;
  const RadiusEdges e = radius_edges_to_targets(sources, targets, Eigen::VectorXd::Constant(1, 0.5));
  EXPECT_EQ(e.sources.size(), 2u);
  EXPECT_THROW(radius_edges_to_targets(sources, targets, Eigen::VectorXd::Zero(1)), ArgumentError);
}

TEST(RadiusEdges, MatchesQuadraticOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Points s = testutil::random_points(100, rng);
    const Points t = testutil::random_points(10, rng);
    Eigen::VectorXd r(10);
    for (Index i = 0; i < 10; ++i) r[i] = uniform(rng, 0.01, 0.4);
    std::set<std::pair<Index, Index>> oracle, oracle_src;
    for (Index a = 0; a < 100; ++a)
      for (Index b = 0; b < 10; ++b) {
        if ((s.row(a) - t.row(b)).norm() <= r[b]) oracle.insert({a, b});
      }
    const RadiusEdges e = radius_edges_to_targets(s, t, r);
    std::set<std::pair<Index, Index>> got;
    for (std::size_t k = 0; k < e.sources.size(); ++k) got.insert({e.sources[k], e.targets[k]});
    EXPECT_EQ(got, oracle);
    EXPECT_EQ(got.size(), e.sources.size());

    // Decoder direction: radius owned by the source.
    for (Index b = 0; b < 10; ++b)
      for (Index a = 0; a < 100; ++a) {
        if ((t.row(b) - s.row(a)).norm() <= r[b]) oracle_src.insert({b, a});
      }
    const RadiusEdges d = radius_edges_from_sources(t, r, s);
    std::set<std::pair<Index, Index>> got_src;
    for (std::size_t k = 0; k < d.sources.size(); ++k) got_src.insert({d.sources[k], d.targets[k]});
    EXPECT_EQ(got_src, oracle_src);
  }
}

TEST(RadiusEdges, FeaturesUseReceiverMinusSender) {
  Points s(1, 2), t(1, 2);
  s << 0.25, 0.5;
  t << 0.75, 0.5;
  const DirectedEdgeSet e = build_radius_edges(s, t, Eigen::VectorXd::Constant(1, 1.0), true, Domain::unit_square());
  ASSERT_EQ(e.size(), 1);
  const Eigen::VectorXd oracle = edge_struct_features(Eigen::Vector2d(-0.5, 0.0), Eigen::Vector2d(0.5, 0.0));
  EXPECT_NEAR(e.features(0, 0), oracle[0], 1e-15);
  EXPECT_NEAR(e.features(0, 2), oracle[2], 1e-15);
}

TEST(MultiscaleEdges, TriangleAndSingleLevel) {
  Points p(3, 2);
  p << 0, 0, 1, 0, 0, 1;
  Rng rng(1);
  EXPECT_EQ(build_r2r_multiscale(p, 6, 2.0, rng, Domain::unit_square()).size(), 6);

  Rng r2(4);
  const Points q = testutil::random_points(40, r2);
  const DirectedEdgeSet e = build_r2r_multiscale(q, 1, 2.0, r2, Domain::unit_square());
  EXPECT_EQ(static_cast<std::size_t>(e.size()), 2 * delaunay(q).edges().size());
}

TEST(MultiscaleEdges, LevelSizesAndUnionOracle) {
  EXPECT_EQ(multiscale_level_sizes(64, 6, 2.0), (std::vector<Index>{64, 32, 16, 8, 4}));
  Rng prng(5);
  const Points p = testutil::random_points(64, prng);
  Rng rng(99);
  int built = 0;
  const DirectedEdgeSet e = build_r2r_multiscale(p, 6, 2.0, rng, Domain::unit_square(), &built);
  EXPECT_EQ(built, 5);

  // Replay the same subset draws and triangulate every level from scratch.
  Rng replay(99);
  std::vector<Index> cur(64);
  for (Index i = 0; i < 64; ++i) cur[i] = i;
  std::set<std::pair<Index, Index>> oracle;
  for (int level = 0; level < 5; ++level) {
    Points sub(static_cast<Index>(cur.size()), 2);
    for (std::size_t i = 0; i < cur.size(); ++i) sub.row(static_cast<Index>(i)) = p.row(cur[i]);
    for (const auto& [a, b] : delaunay(sub).edges()) {
      oracle.insert({cur[a], cur[b]});
      oracle.insert({cur[b], cur[a]});
    }
    if (level == 4) break;
    const auto pick = sample_without_replacement(static_cast<std::int64_t>(cur.size()),
                                                 static_cast<std::int64_t>(cur.size() / 2), replay);
    std::vector<Index> next;
    for (auto k : pick) next.push_back(cur[static_cast<std::size_t>(k)]);
    std::sort(next.begin(), next.end());
    cur = next;
  }
  EXPECT_EQ(pair_set(e), oracle);
  EXPECT_EQ(static_cast<std::size_t>(e.size()), oracle.size());
}

TEST(MultiscaleEdges, SymmetricProperty) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Points p = testutil::random_points(30 + 20 * trial, rng);
    const DirectedEdgeSet e = build_r2r_multiscale(p, 4, 2.0, rng, Domain::unit_square(trial % 2 == 1, trial % 2 == 1));
    const auto s = pair_set(e);
    EXPECT_EQ(s.size(), static_cast<std::size_t>(e.size()));
    for (const auto& [a, b] : s) {
      EXPECT_NE(a, b);
      EXPECT_TRUE(s.count({b, a}));
    }
  }
}

TEST(RefineMesh, Basics) {
  Points tri(3, 2);
  tri << 0, 0, 1, 0, 0, 1;
  Rng rng(1);
  RefinedMesh m = refine_mesh(tri, 4, rng);
  ASSERT_EQ(m.points.rows(), 4);
  EXPECT_NEAR(m.points(3, 0), 1.0 / 3, 1e-15);
  EXPECT_NEAR(m.points(3, 1), 1.0 / 3, 1e-15);
  m = refine_mesh(tri, 3, rng);
  EXPECT_EQ(m.points, tri);
  EXPECT_THROW(refine_mesh(tri, 2, rng), ArgumentError);
}

TEST(RefineMesh, ProvenanceAndLocality) {
  Rng rng(12);
  const Points p = testutil::random_points(50, rng);
  const RefinedMesh m = refine_mesh(p, 75, rng);
  ASSERT_EQ(m.points.rows(), 75);
  ASSERT_EQ(m.provenance.size(), 25u);
  EXPECT_EQ(m.points.topRows(50), p);
  const double hull = testutil::hull_area(p);
  for (Index k = 0; k < 25; ++k) {
    const auto& t = m.provenance[k];
    for (Index v : t) EXPECT_LT(v, 50 + k);
    const Eigen::RowVector2d c = (m.points.row(t[0]) + m.points.row(t[1]) + m.points.row(t[2])) / 3.0;
    EXPECT_NEAR((m.points.row(50 + k) - c).norm(), 0.0, 1e-15);
  }
  EXPECT_NEAR(testutil::hull_area(m.points), hull, 1e-12);
}

TEST(BuildGraph, PeriodicGridCoverage) {
  Points g(64, 2);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) g.row(8 * i + j) << (j + 0.5) / 8, (i + 0.5) / 8;
  PointCloud c{g, Domain::unit_square(true, true)};
  GraphConfig cfg;
  Rng rng(3);
  const RegionalGraph gr = build_graph(c, cfg, rng);
  EXPECT_EQ(gr.num_regional(), 16);
  EXPECT_TRUE(uncovered_by_encoder(gr).empty());
  EXPECT_TRUE(missing_decoder_edges(gr).empty());
  EXPECT_EQ(gr.node_feats_phys.cols(), 16);
  EXPECT_EQ(gr.node_feats_reg.cols(), 17);
}

TEST(BuildGraph, BoundedCoverageBruteForce) {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud c = random_cloud(256 + 200 * trial, rng);
    GraphConfig cfg;
    const RegionalGraph g = build_graph(c, cfg, rng);
    for (Index i = 0; i < c.size(); ++i) {
      bool inside = false;
      for (Index r = 0; r < g.num_regional() && !inside; ++r) {
        inside = (c.coords.row(i) - g.regional.row(r)).norm() <= g.radii_encoder[r];
      }
      EXPECT_TRUE(inside) << "node " << i;
    }
    EXPECT_TRUE(missing_decoder_edges(g).empty());
    // Regional nodes sit on physical nodes.
    for (Index r = 0; r < g.num_regional(); ++r) EXPECT_EQ(g.regional.row(r), c.coords.row(g.regional_indices[r]));
    // Edge sets contain no duplicates and are ordered by receiver.
    for (const DirectedEdgeSet* e : {&g.p2r, &g.r2r, &g.r2p}) {
      EXPECT_EQ(pair_set(*e).size(), static_cast<std::size_t>(e->size()));
      EXPECT_TRUE(std::is_sorted(e->receivers.begin(), e->receivers.end()));
    }
  }
}

TEST(BuildGraph, CrossBoundaryEdgeIsShort) {
  Points reg(25, 2);
  const double xs[5] = {0.02, 0.26, 0.5, 0.74, 0.98};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) reg.row(5 * i + j) << xs[j], 0.1 + 0.2 * i + 0.013 * j;
  Rng rng(5);
  PointCloud c{testutil::random_points(200, rng), Domain::unit_square(true, true)};
  GraphConfig cfg;
  const RegionalGraph g = build_graph_with_regional(c, reg, {}, cfg, rng);
  bool found = false;
  for (Index k = 0; k < g.r2r.size(); ++k) {
    if (g.r2r.senders[k] == 4 && g.r2r.receivers[k] == 0) {
      found = true;
      // dx = +0.04 across the wrap, dy = -0.052
      const Eigen::Vector2d dz(2 * 0.04, 2 * -0.052);
      EXPECT_NEAR(g.r2r.features(k, 0), dz.x() / (2 * std::sqrt(2.0)), 1e-12);
      EXPECT_NEAR(g.r2r.features(k, 1), dz.y() / (2 * std::sqrt(2.0)), 1e-12);
      EXPECT_LT(g.r2r.features(k, 2), 0.05);
    }
  }
  EXPECT_TRUE(found);
  EXPECT_TRUE(uncovered_by_encoder(g).empty());
}

TEST(BuildGraph, PeriodicTranslationInvariance) {
  Rng rng(6);
  const Points p = testutil::random_points(400, rng);
  Points shifted = p;
  for (Index i = 0; i < p.rows(); ++i) {
    shifted(i, 0) = std::fmod(p(i, 0) + 0.37, 1.0);
    shifted(i, 1) = std::fmod(p(i, 1) + 0.81, 1.0);
  }
  std::vector<Index> idx;
  for (Index i = 0; i < 400; i += 4) idx.push_back(i);
  auto regional_of = [&](const Points& x) {
    Points r(static_cast<Index>(idx.size()), 2);
    for (std::size_t k = 0; k < idx.size(); ++k) r.row(static_cast<Index>(k)) = x.row(idx[k]);
    return r;
  };
  GraphConfig cfg;
  Rng ra(9), rb(9);
  const RegionalGraph a = build_graph_with_regional({p, Domain::unit_square(true, true)}, regional_of(p), idx, cfg, ra);
  const RegionalGraph b =
      build_graph_with_regional({shifted, Domain::unit_square(true, true)}, regional_of(shifted), idx, cfg, rb);
  for (auto sel : {&RegionalGraph::p2r, &RegionalGraph::r2r, &RegionalGraph::r2p}) {
    const DirectedEdgeSet& ea = a.*sel;
    const DirectedEdgeSet& eb = b.*sel;
    ASSERT_EQ(ea.size(), eb.size());
    std::map<std::pair<Index, Index>, Index> where;
    for (Index k = 0; k < eb.size(); ++k) where[{eb.senders[k], eb.receivers[k]}] = k;
    for (Index k = 0; k < ea.size(); ++k) {
      auto it = where.find({ea.senders[k], ea.receivers[k]});
      ASSERT_NE(it, where.end());
      EXPECT_LT((ea.features.row(k) - eb.features.row(it->second)).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(BuildGraph, Deterministic) {
  Rng c1(7);
  PointCloud c = random_cloud(500, c1);
  GraphConfig cfg;
  Rng a(11), b(11);
  const RegionalGraph ga = build_graph(c, cfg, a);
  const RegionalGraph gb = build_graph(c, cfg, b);
  EXPECT_EQ(ga.regional_indices, gb.regional_indices);
  EXPECT_EQ(ga.r2r.senders, gb.r2r.senders);
  EXPECT_EQ(ga.r2r.features, gb.r2r.features);
  EXPECT_EQ(ga.p2r.features, gb.p2r.features);
  EXPECT_EQ(ga.r2p.receivers, gb.r2p.receivers);
}

TEST(BuildGraph, SmallDecoderOverlapFails) {
  Rng rng(8);
  PointCloud c = random_cloud(400, rng);
  GraphConfig cfg;
  cfg.overlap_decoder = 0.05;
  try {
    build_graph(c, cfg, rng);
    FAIL() << "expected ConstructionError";
  } catch (const ConstructionError& e) {
    EXPECT_GE(e.node(), 0);
    EXPECT_LT(e.node(), 400);
  }
}

TEST(BuildGraph, RegionalFeatureCarriesRadius) {
  Rng rng(10);
  PointCloud c = random_cloud(300, rng);
  const RegionalGraph g = build_graph(c, GraphConfig{}, rng);
  for (Index r = 0; r < g.num_regional(); ++r) {
    EXPECT_DOUBLE_EQ(g.node_feats_reg(r, 2), g.radii_encoder[r] / std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(g.radii_decoder[r], 2.0 * g.radii_encoder[r]);
  }
}

TEST(BuildGraph, RegionalCountCorrection) {
  Rng rng(13);
  GraphConfig cfg;
  PointCloud fine = random_cloud(2048, rng);
  const RegionalGraph g2 = build_graph_with_regional_count(fine, 256, cfg, rng);
  EXPECT_EQ(g2.num_regional(), 256);
  PointCloud coarse = random_cloud(512, rng);
  const RegionalGraph g1 = build_graph_with_regional_count(coarse, 256, cfg, rng);
  EXPECT_EQ(g1.num_regional(), 256);
  EXPECT_TRUE(g1.regional_indices.empty());
  EXPECT_TRUE(missing_decoder_edges(g1).empty());
}
