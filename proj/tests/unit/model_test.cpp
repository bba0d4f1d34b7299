#include <gtest/gtest.h>

#include <numeric>

#include "gradcheck.hpp"
#include "rigno/graphs.hpp"
#include "rigno/model.hpp"
#include "test_util.hpp"

using namespace rigno;
using ad::Tape;
using ad::Var;
using testutil::DMat;

namespace {

RegionalGraph small_graph(Index n, std::uint64_t seed, bool periodic = false) {
  Rng rng(seed);
  PointCloud cloud{testutil::random_points(n, rng), Domain::unit_square(periodic, periodic)};
  GraphConfig gc;
  gc.edge_levels = 2;
  gc.k_freq = 1;
  Rng grng(seed + 1);
  return build_graph(cloud, gc, grng);
}

ModelConfig tiny_config(const RegionalGraph& g, int P = 1) {
  ModelConfig c = ModelConfig::for_domain(g.physical.domain, 1, 1, 1);
  c.latent = 3;
  c.hidden = 2;
  c.cond_hidden = 1;
  c.processor_steps = P;
  return c;
}

BatchInput<double> random_input(Index B, Index N, Rng& rng, std::vector<double> tau) {
  BatchInput<double> in;
  in.u = testutil::random_matrix(B * N, 1, rng);
  in.c = testutil::random_matrix(B * N, 1, rng);
  for (Index b = 0; b < B; ++b) in.t.push_back(0.1 * static_cast<double>(b));
  in.tau = std::move(tau);
  return in;
}

// Every parameter random, including the zero-initialised conditioning outputs.
void randomize(ParamSet<double>& p, Rng& rng, double scale = 0.5) {
  for (auto& v : p.values) v = testutil::random_matrix(v.rows(), v.cols(), rng, scale);
}

DMat run(const Model<double>& m, const GraphTensors<double>& g, const BatchInput<double>& in,
         const MaskPlan* mask = nullptr) {
  Tape<double> t;
  return m.forward(m.bind(t), g, in, mask).value();
}

void zero_prefix(ParamSet<double>& p, const std::string& prefix) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.names[i].rfind(prefix, 0) == 0) p.values[i].setZero();
  }
}

}  // namespace

TEST(Model, EndToEndGradientCheck) {
  const RegionalGraph graph = small_graph(24, 3);
  const GraphTensors<double> g = GraphTensors<double>::from_graph(graph);
  const ModelConfig cfg = tiny_config(graph);
  Model<double> base(cfg, 1);
  ASSERT_LE(base.parameter_count(), 500);
  Rng rng(4);
  randomize(base.params(), rng);
  const BatchInput<double> in = random_input(2, g.num_physical, rng, {0.4, 1.3});
  const DMat target = testutil::random_matrix(2 * g.num_physical, 1, rng);
  const MaskPlan mask = MaskPlan::sample(0.3, 9, g.p2r_send.size(), g.r2r_send.size(), g.r2p_send.size(), 1, 2);

  const double err = testutil::max_grad_rel_err(
      [&](Tape<double>& t, const std::vector<Var<double>>& vars) {
        typename Model<double>::Bound b;
        b.tape = &t;
        b.vars = vars;
        return ad::sum_sq_diff(base.forward(b, g, in, &mask), t.constant(target), 1.0);
      },
      base.params().values, 1e-5, 1e-4);
  EXPECT_LT(err, 1e-4);
}

TEST(Model, ParameterGradientsMatchBoundOrder) {
  const RegionalGraph graph = small_graph(20, 5);
  const GraphTensors<double> g = GraphTensors<double>::from_graph(graph);
  const Model<double> m(tiny_config(graph), 2);
  Rng rng(6);
  const BatchInput<double> in = random_input(1, g.num_physical, rng, {0.5});
  Tape<double> t;
  const auto b = m.bind(t);
  t.backward(ad::sum(m.forward(b, g, in, nullptr)));
  const auto grads = m.gradients(b);
  ASSERT_EQ(grads.size(), m.params().size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    EXPECT_EQ(grads[i].rows(), m.params().values[i].rows());
    EXPECT_EQ(grads[i].cols(), m.params().values[i].cols());
  }
}

TEST(Model, ZeroLeadTimeIgnoresConditioning) {
  const RegionalGraph graph = small_graph(30, 7);
  const GraphTensors<double> g = GraphTensors<double>::from_graph(graph);
  Model<double> a(tiny_config(graph, 2), 3);
  Rng rng(8);
  randomize(a.params(), rng);
  ParamSet<double> stripped = a.params();
  for (std::size_t i = 0; i < stripped.size(); ++i) {
    const auto& n = stripped.names[i];
    if (n.find("/gamma/") != std::string::npos || n.find("/lambda/") != std::string::npos) stripped.values[i].setZero();
  }
  const Model<double> b(tiny_config(graph, 2), stripped);
  const BatchInput<double> in = random_input(2, g.num_physical, rng, {0.0, 0.0});
  EXPECT_EQ(run(a, g, in), run(b, g, in));
  // Nonzero lead time does see the conditioning.
  const BatchInput<double> in2 = random_input(1, g.num_physical, rng, {0.7});
  EXPECT_GT((run(a, g, in2) - run(b, g, in2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Model, NoProcessorBlocks) {
  const RegionalGraph graph = small_graph(30, 11);
  const GraphTensors<double> g = GraphTensors<double>::from_graph(graph);
  const Model<double> m(tiny_config(graph, 0), 5);
  Rng rng(12);
  const BatchInput<double> in = random_input(1, g.num_physical, rng, {0.2});
  Tape<double> t;
  const auto b = m.bind(t);
  State<double> st = m.embed(b, g, in);
  m.encode(b, g, st, nullptr);
  const DMat before = st.vR.value();
  const auto id = st.vR.id;
  m.process(b, g, st, nullptr);
  EXPECT_EQ(st.vR.id, id);
  EXPECT_EQ(st.vR.value(), before);
  const MaskPlan mask = MaskPlan::sample(0.5, 1, g.p2r_send.size(), g.r2r_send.size(), g.r2p_send.size(), 0, 1);
  EXPECT_EQ(mask.kept.size(), 2u);
  EXPECT_EQ(m.forward(b, g, in, &mask).value().rows(), g.num_physical);
}

TEST(Model, ZeroProcessorWeightsKeepResidualStream) {
  const RegionalGraph graph = small_graph(30, 13);
  const GraphTensors<double> g = GraphTensors<double>::from_graph(graph);
  Model<double> m(tiny_config(graph, 2), 5);
  Rng rng(14);
  randomize(m.params(), rng);
  zero_prefix(m.params(), "processor/");
  const BatchInput<double> in = random_input(2, g.num_physical, rng, {0.3, 0.0});
  Tape<double> t;
  const auto b = m.bind(t);
  State<double> st = m.embed(b, g, in);
  m.encode(b, g, st, nullptr);
  const DMat vr = st.vR.value(), err = st.eRR.value();
  m.process(b, g, st, nullptr);
  EXPECT_EQ(st.vR.value(), vr);
  EXPECT_EQ(st.eRR.value(), err);
}

TEST(Model, MaskPlanDeterminismAndDropRate) {
  const MaskPlan a = MaskPlan::sample(0.5, 42, 1000, 2000, 3000, 3, 2);
  const MaskPlan b = MaskPlan::sample(0.5, 42, 1000, 2000, 3000, 3, 2);
  const MaskPlan c = MaskPlan::sample(0.5, 43, 1000, 2000, 3000, 3, 2);
  EXPECT_EQ(a.kept, b.kept);
  EXPECT_NE(a.kept, c.kept);
  ASSERT_EQ(a.kept.size(), 5u);
  EXPECT_NEAR(static_cast<double>(a.kept[4][1].size()) / 3000.0, 0.5, 0.05);
  EXPECT_NE(a.kept[1][0], a.kept[1][1]);
  const MaskPlan none = MaskPlan::sample(0.0, 1, 10, 20, 30, 1, 1);
  EXPECT_EQ(none.kept[1][0].size(), 20u);
}

TEST(Model, ZeroDropMaskEqualsNoMask) {
  const RegionalGraph graph = small_graph(30, 15);
  const GraphTensors<double> g = GraphTensors<double>::from_graph(graph);
  Model<double> m(tiny_config(graph, 2), 6);
  Rng rng(16);
  randomize(m.params(), rng);
  const BatchInput<double> in = random_input(2, g.num_physical, rng, {0.3, 0.9});
  const MaskPlan mask = MaskPlan::sample(0.0, 3, g.p2r_send.size(), g.r2r_send.size(), g.r2p_send.size(), 2, 2);
  EXPECT_EQ(run(m, g, in, &mask), run(m, g, in));
}

TEST(Model, BatchMembersAreIndependent) {
  const RegionalGraph graph = small_graph(30, 17);
  const GraphTensors<double> g = GraphTensors<double>::from_graph(graph);
  Model<double> m(tiny_config(graph, 2), 7);
  Rng rng(18);
  randomize(m.params(), rng);
  const Index N = g.num_physical;
  const BatchInput<double> both = random_input(2, N, rng, {0.3, 0.9});
  BatchInput<double> second;
  second.u = both.u.bottomRows(N);
  second.c = both.c.bottomRows(N);
  second.t = {both.t[1]};
  second.tau = {both.tau[1]};
  const DMat full = run(m, g, both);
  EXPECT_LT((full.bottomRows(N) - run(m, g, second)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, DuplicatedEdgesLeaveOutputUnchanged) {
  const RegionalGraph graph = small_graph(30, 19);
  const GraphTensors<double> g = GraphTensors<double>::from_graph(graph);
  GraphTensors<double> d = g;
  auto dup = [](std::vector<std::int32_t>& v) { v.insert(v.end(), v.begin(), v.end()); };
  auto dup_rows = [](DMat& m) {
    DMat o(2 * m.rows(), m.cols());
    o << m, m;
    m = o;
  };
  for (auto* v : {&d.p2r_send, &d.p2r_recv, &d.r2r_send, &d.r2r_recv, &d.r2p_send, &d.r2p_recv}) dup(*v);
  dup_rows(d.p2r_feats);
  dup_rows(d.r2r_feats);
  dup_rows(d.r2p_feats);
  Model<double> m(tiny_config(graph, 2), 8);
  Rng rng(20);
  randomize(m.params(), rng);
  const BatchInput<double> in = random_input(2, g.num_physical, rng, {0.3, 0.9});
  EXPECT_LT((run(m, g, in) - run(m, d, in)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, PhysicalNodePermutationEquivariance) {
  const RegionalGraph graph = small_graph(30, 21);
  const GraphTensors<double> g = GraphTensors<double>::from_graph(graph);
  const Index N = g.num_physical;
  std::vector<std::int32_t> perm(static_cast<std::size_t>(N));  // new row -> old row
  std::iota(perm.begin(), perm.end(), 0);
  Rng prng(22);
  std::shuffle(perm.begin(), perm.end(), prng);
  std::vector<std::int32_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<std::int32_t>(i);

  GraphTensors<double> h = g;
  for (Index i = 0; i < N; ++i) h.phys_struct.row(i) = g.phys_struct.row(perm[i]);
  for (auto& s : h.p2r_send) s = inv[s];
  for (auto& r : h.r2p_recv) r = inv[r];

  Model<double> m(tiny_config(graph, 1), 9);
  Rng rng(23);
  randomize(m.params(), rng);
  const BatchInput<double> in = random_input(1, N, rng, {0.6});
  BatchInput<double> pin = in;
  for (Index i = 0; i < N; ++i) {
    pin.u.row(i) = in.u.row(perm[i]);
    pin.c.row(i) = in.c.row(perm[i]);
  }
  const DMat a = run(m, g, in), b = run(m, h, pin);
  for (Index i = 0; i < N; ++i) EXPECT_NEAR(b(i, 0), a(perm[i], 0), 1e-12);
}

TEST(Model, OutputWidthFollowsFieldChannels) {
  const RegionalGraph graph = small_graph(30, 25);
  const GraphTensors<double> g = GraphTensors<double>::from_graph(graph);
  ModelConfig cfg = ModelConfig::for_domain(graph.physical.domain, 1, 3, 0);
  cfg.latent = 4;
  cfg.hidden = 4;
  cfg.processor_steps = 1;
  const Model<double> m(cfg, 1);
  BatchInput<double> in;
  Rng rng(26);
  in.u = testutil::random_matrix(g.num_physical, 3, rng);
  in.t = {0.0};
  in.tau = {0.5};
  const DMat out = run(m, g, in);
  EXPECT_EQ(out.rows(), g.num_physical);
  EXPECT_EQ(out.cols(), 3);
  in.u = testutil::random_matrix(g.num_physical, 2, rng);
  EXPECT_THROW(run(m, g, in), ArgumentError);
}

TEST(Model, FullSizeParameterCount) {
  const Domain dom = Domain::unit_square();
  const ModelConfig cfg = ModelConfig::for_domain(dom, 4, 1, 0);
  EXPECT_EQ(cfg.processor_steps, 18);
  const Model<float> m(cfg, 0);
  EXPECT_NEAR(static_cast<double>(m.parameter_count()), 2.7e6, 0.15 * 2.7e6);
  Index total = 0;
  for (const auto& [name, n] : m.describe()) total += n;
  EXPECT_EQ(total, m.parameter_count());
}

TEST(Model, ParamSetRoundTripAndMismatch) {
  const RegionalGraph graph = small_graph(20, 27);
  const ModelConfig cfg = tiny_config(graph, 1);
  const Model<double> a(cfg, 4);
  const Model<double> b(cfg, a.params());
  EXPECT_EQ(b.params().values, a.params().values);
  ModelConfig other = cfg;
  other.processor_steps = 2;
  EXPECT_THROW(Model<double>(other, a.params()), ConfigError);
  const Model<float> f = a.cast<float>();
  EXPECT_EQ(f.parameter_count(), a.parameter_count());
}

TEST(Model, FloatTracksDouble) {
  const RegionalGraph graph = small_graph(40, 29);
  const GraphTensors<double> gd = GraphTensors<double>::from_graph(graph);
  const GraphTensors<float> gf = GraphTensors<float>::from_graph(graph);
  Model<double> m(tiny_config(graph, 2), 10);
  Rng rng(30);
  randomize(m.params(), rng, 0.3);
  const Model<float> mf = m.cast<float>();
  const BatchInput<double> in = random_input(1, gd.num_physical, rng, {0.5});
  BatchInput<float> inf;
  inf.u = in.u.cast<float>();
  inf.c = in.c.cast<float>();
  inf.t = {0.0f};
  inf.tau = {0.5f};
  Tape<float> t;
  const auto of = mf.forward(mf.bind(t), gf, inf, nullptr).value().cast<double>();
  EXPECT_LT((of - run(m, gd, in)).cwiseAbs().maxCoeff(), 1e-3);
}
