#include "rigno/model.hpp"

#include <cmath>
#include <map>

namespace rigno {

using ad::Indices;
using ad::Mat;
using ad::Var;

void ModelConfig::validate() const {
  if (latent < 1 || hidden < 1 || cond_hidden < 1) throw ConfigError("model widths must be positive");
  if (processor_steps < 0) throw ConfigError("processor_steps must be >= 0");
  if (field_channels < 1) throw ConfigError("field_channels must be >= 1");
  if (coeff_channels < 0) throw ConfigError("coeff_channels must be >= 0");
  if (phys_struct_width < 1 || reg_struct_width < 1 || edge_struct_width < 1) {
    throw ConfigError("structural feature widths must be positive");
  }
  if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be positive");
}

ModelConfig ModelConfig::for_domain(const Domain& domain, int k_freq, int field_channels, int coeff_channels) {
  ModelConfig c;
  c.field_channels = field_channels;
  c.coeff_channels = coeff_channels;
  c.phys_struct_width = static_cast<int>(node_feature_width(domain, k_freq));
  c.reg_struct_width = c.phys_struct_width + 1;
  c.edge_struct_width = static_cast<int>(domain.dim()) + 1;
  return c;
}

MaskPlan MaskPlan::sample(double p, std::uint64_t seed, Index p2r_edges, Index r2r_edges, Index r2p_edges,
                          int processor_steps, Index batch) {
  MaskPlan plan;
  const int blocks = processor_steps + 2;
  plan.kept.resize(static_cast<std::size_t>(blocks));
  for (int k = 0; k < blocks; ++k) {
    const Index e = k == 0 ? p2r_edges : (k == blocks - 1 ? r2p_edges : r2r_edges);
    Rng rng = derive_rng(seed, static_cast<std::uint64_t>(k));
    auto& per_sample = plan.kept[static_cast<std::size_t>(k)];
    per_sample.resize(static_cast<std::size_t>(batch));
    for (Index b = 0; b < batch; ++b) {
      auto& keep = per_sample[static_cast<std::size_t>(b)];
      keep.reserve(static_cast<std::size_t>(e));
      for (Index i = 0; i < e; ++i) {
        if (p <= 0.0 || uniform01(rng) >= p) keep.push_back(static_cast<std::int32_t>(i));
      }
    }
  }
  return plan;
}

std::vector<Index> uniform_offsets(Index batch, Index n) {
  std::vector<Index> off(static_cast<std::size_t>(batch + 1));
  for (Index b = 0; b <= batch; ++b) off[b] = b * n;
  return off;
}

template <typename S>
GraphTensors<S> GraphTensors<S>::from_graph(const RegionalGraph& g) {
  GraphTensors<S> t;
  t.num_physical = g.num_physical();
  t.num_regional = g.num_regional();
  t.phys_struct = g.node_feats_phys.cast<S>();
  t.reg_struct = g.node_feats_reg.cast<S>();
  t.p2r_feats = g.p2r.features.cast<S>();
  t.r2r_feats = g.r2r.features.cast<S>();
  t.r2p_feats = g.r2p.features.cast<S>();
  auto conv = [](const std::vector<Index>& v) { return std::vector<std::int32_t>(v.begin(), v.end()); };
  t.p2r_send = conv(g.p2r.senders);
  t.p2r_recv = conv(g.p2r.receivers);
  t.r2r_send = conv(g.r2r.senders);
  t.r2r_recv = conv(g.r2r.receivers);
  t.r2p_send = conv(g.r2p.senders);
  t.r2p_recv = conv(g.r2p.receivers);
  return t;
}

namespace {

// Row map repeating n shared rows once per batch member.
Indices tile_rows(Index n, Index batch) {
  std::vector<std::int32_t> v(static_cast<std::size_t>(n * batch));
  for (Index b = 0; b < batch; ++b)
    for (Index i = 0; i < n; ++i) v[b * n + i] = static_cast<std::int32_t>(i);
  return ad::make_indices(std::move(v));
}

struct EdgeSelection {
  Indices send, recv, edge;
  std::vector<Index> offsets;
};

// Kept edges of every batch member with sender/receiver rows shifted into
// the stacked node blocks. `edge` indexes the shared (unstacked) edge list
// unless `stack_edges` is set.
EdgeSelection select_edges(const std::vector<std::int32_t>& send, const std::vector<std::int32_t>& recv,
                           Index send_block, Index recv_block, Index batch,
                           const std::vector<std::vector<std::int32_t>>* kept, bool stack_edges) {
  const auto e_count = static_cast<Index>(send.size());
  std::vector<std::int32_t> s, r, e;
  EdgeSelection sel;
  sel.offsets.push_back(0);
  for (Index b = 0; b < batch; ++b) {
    auto emit = [&](std::int32_t k) {
      s.push_back(static_cast<std::int32_t>(b * send_block + send[k]));
      r.push_back(static_cast<std::int32_t>(b * recv_block + recv[k]));
      e.push_back(static_cast<std::int32_t>(stack_edges ? b * e_count + k : k));
    };
    if (kept) {
      for (std::int32_t k : (*kept)[static_cast<std::size_t>(b)]) emit(k);
    } else {
      for (Index k = 0; k < e_count; ++k) emit(static_cast<std::int32_t>(k));
    }
    sel.offsets.push_back(static_cast<Index>(s.size()));
  }
  sel.send = ad::make_indices(std::move(s));
  sel.recv = ad::make_indices(std::move(r));
  sel.edge = ad::make_indices(std::move(e));
  return sel;
}

const std::vector<std::vector<std::int32_t>>* block_mask(const MaskPlan* mask, int block, Index batch) {
  if (!mask) return nullptr;
  if (block >= static_cast<int>(mask->kept.size()) ||
      static_cast<Index>(mask->kept[static_cast<std::size_t>(block)].size()) != batch) {
    throw ArgumentError("MaskPlan does not match the model or batch");
  }
  return &mask->kept[static_cast<std::size_t>(block)];
}

}  // namespace

template <typename S>
Model<S>::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = derive_rng(seed, 0x6d6f64656cULL);
  build(&rng);
}

template <typename S>
Model<S>::Model(const ModelConfig& cfg, ParamSet<S> params) : cfg_(cfg) {
  cfg_.validate();
  build(nullptr);
  if (params.size() != params_.size()) throw ConfigError("parameter set does not match the model configuration");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params.names[i] != params_.names[i] || params.values[i].rows() != params_.values[i].rows() ||
        params.values[i].cols() != params_.values[i].cols()) {
      throw ConfigError("parameter '" + params.names[i] + "' does not match the model configuration");
    }
  }
  params_ = std::move(params);
}

template <typename S>
int Model<S>::param(const std::string& name, Index rows, Index cols, Rng* rng, double bound) {
  Mat<S> m = Mat<S>::Zero(rows, cols);
  if (rng && bound > 0.0) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(uniform(*rng, -bound, bound));
  }
  return static_cast<int>(params_.add(name, std::move(m)));
}

template <typename S>
typename Model<S>::CondRef Model<S>::make_cond(const std::string& name, Index width, Rng* rng) {
  CondRef c;
  const Index h = cfg_.cond_hidden;
  // Output layers start at zero so every conditioned norm is the plain norm.
  c.g_w1 = param(name + "/gamma/w1", 1, h, rng, 1.0);
  c.g_b1 = param(name + "/gamma/b1", 1, h, rng, 0.0);
  c.g_w2 = param(name + "/gamma/w2", h, width, rng, 0.0);
  c.g_b2 = param(name + "/gamma/b2", 1, width, rng, 0.0);
  c.l_w1 = param(name + "/lambda/w1", 1, h, rng, 1.0);
  c.l_b1 = param(name + "/lambda/b1", 1, h, rng, 0.0);
  c.l_w2 = param(name + "/lambda/w2", h, width, rng, 0.0);
  c.l_b2 = param(name + "/lambda/b2", 1, width, rng, 0.0);
  return c;
}

template <typename S>
typename Model<S>::FFRef Model<S>::make_ff(const std::string& name, Index in, Index out, Rng* rng) {
  FFRef f;
  const Index h = cfg_.hidden;
  f.w1 = param(name + "/w1", in, h, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  f.b1 = param(name + "/b1", 1, h, rng, 0.0);
  f.w2 = param(name + "/w2", h, out, rng, 1.0 / std::sqrt(static_cast<double>(h)));
  f.b2 = param(name + "/b2", 1, out, rng, 0.0);
  f.cond = make_cond(name, out, rng);
  return f;
}

template <typename S>
typename Model<S>::EdgeFFRef Model<S>::make_edge_ff(const std::string& name, Index send, Index recv, Index edge,
                                                    Index out, Rng* rng) {
  EdgeFFRef f;
  const Index h = cfg_.hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(send + recv + edge));
  f.w_send = param(name + "/w_send", send, h, rng, bound);
  f.w_recv = param(name + "/w_recv", recv, h, rng, bound);
  f.w_edge = param(name + "/w_edge", edge, h, rng, bound);
  f.b1 = param(name + "/b1", 1, h, rng, 0.0);
  f.w2 = param(name + "/w2", h, out, rng, 1.0 / std::sqrt(static_cast<double>(h)));
  f.b2 = param(name + "/b2", 1, out, rng, 0.0);
  f.cond = make_cond(name, out, rng);
  return f;
}

template <typename S>
void Model<S>::build(Rng* rng) {
  params_ = ParamSet<S>();
  const Index L = cfg_.latent;
  emb_phys_ = make_ff("embed/phys", cfg_.phys_input_width(), L, rng);
  emb_reg_ = make_ff("embed/reg", cfg_.reg_struct_width, L, rng);
  emb_p2r_ = make_ff("embed/p2r", cfg_.edge_struct_width, L, rng);
  emb_r2r_ = make_ff("embed/r2r", cfg_.edge_struct_width, L, rng);
  emb_r2p_ = make_ff("embed/r2p", cfg_.edge_struct_width, L, rng);
  enc_edge_ = make_edge_ff("encoder/edge", L, L, L, L, rng);
  enc_reg_ = make_ff("encoder/reg", 2 * L, L, rng);
  enc_phys_ = make_ff("encoder/phys", L, L, rng);
  proc_edge_.clear();
  proc_node_.clear();
  for (int p = 0; p < cfg_.processor_steps; ++p) {
    const std::string base = "processor/" + std::to_string(p);
    proc_edge_.push_back(make_edge_ff(base + "/edge", L, L, L, L, rng));
    proc_node_.push_back(make_ff(base + "/node", 2 * L, L, rng));
  }
  dec_edge_ = make_edge_ff("decoder/edge", L, L, L, L, rng);
  dec_phys_ = make_ff("decoder/phys", 2 * L, L, rng);
  const Index h = cfg_.hidden;
  out_.w1 = param("output/w1", L, h, rng, 1.0 / std::sqrt(static_cast<double>(L)));
  out_.b1 = param("output/b1", 1, h, rng, 0.0);
  out_.w2 = param("output/w2", h, cfg_.field_channels, rng, 1.0 / std::sqrt(static_cast<double>(h)));
  out_.b2 = param("output/b2", 1, cfg_.field_channels, rng, 0.0);
}

template <typename S>
typename Model<S>::Bound Model<S>::bind(ad::Tape<S>& tape) const {
  Bound b;
  b.tape = &tape;
  b.vars.reserve(params_.size());
  for (const auto& v : params_.values) b.vars.push_back(tape.variable(v));
  return b;
}

template <typename S>
std::vector<Mat<S>> Model<S>::gradients(const Bound& bound) const {
  std::vector<Mat<S>> g;
  g.reserve(bound.vars.size());
  for (const auto& v : bound.vars) g.push_back(bound.tape->grad(v));
  return g;
}

template <typename S>
std::pair<Var<S>, Var<S>> Model<S>::cond_mlps(const Bound& p, const CondRef& c, const std::vector<S>& tau) const {
  Mat<S> t(static_cast<Index>(tau.size()), 1);
  for (std::size_t i = 0; i < tau.size(); ++i) t(static_cast<Index>(i), 0) = tau[i];
  const Var<S> tv = p.tape->constant(std::move(t));
  const auto& v = p.vars;
  const Var<S> hg = ad::sigmoid(ad::affine(tv, v[c.g_w1], v[c.g_b1]));
  const Var<S> hl = ad::sigmoid(ad::affine(tv, v[c.l_w1], v[c.l_b1]));
  return {ad::affine(hg, v[c.g_w2], v[c.g_b2]), ad::affine(hl, v[c.l_w2], v[c.l_b2])};
}

template <typename S>
Var<S> Model<S>::ff_core(const Bound& p, const FFRef& f, const Var<S>& x) const {
  const auto& v = p.vars;
  const Var<S> h = ad::swish(ad::affine(x, v[f.w1], v[f.b1]));
  return ad::layer_norm(ad::affine(h, v[f.w2], v[f.b2]), cfg_.norm_eps);
}

template <typename S>
Var<S> Model<S>::ff(const Bound& p, const FFRef& f, const Var<S>& x, const std::vector<S>& tau,
                    const std::vector<Index>& offsets, const Indices& src) const {
  const Var<S> y = ff_core(p, f, x);
  const auto [g, l] = cond_mlps(p, f.cond, tau);
  return ad::condition(y, g, l, tau, offsets, src);
}

template <typename S>
Var<S> Model<S>::edge_ff(const Bound& p, const EdgeFFRef& f, const Var<S>& send, const Indices& send_idx,
                         const Var<S>& recv, const Indices& recv_idx, const Var<S>& edge, const std::vector<S>& tau,
                         const std::vector<Index>& offsets) const {
  const auto& v = p.vars;
  const Var<S> as = ad::matmul(send, v[f.w_send]);
  const Var<S> ar = ad::matmul(recv, v[f.w_recv]);
  const Var<S> base = ad::affine(edge, v[f.w_edge], v[f.b1]);
  const Var<S> h = ad::swish(ad::gather_sum(base, as, send_idx, ar, recv_idx));
  const Var<S> y = ad::layer_norm(ad::affine(h, v[f.w2], v[f.b2]), cfg_.norm_eps);
  const auto [g, l] = cond_mlps(p, f.cond, tau);
  return ad::condition(y, g, l, tau, offsets);
}

template <typename S>
State<S> Model<S>::embed(const Bound& p, const GraphTensors<S>& g, const BatchInput<S>& in) const {
  State<S> st;
  st.B = in.batch();
  st.N = g.num_physical;
  st.R = g.num_regional;
  st.tau = in.tau;
  const Index B = st.B, N = st.N;
  const Index s = cfg_.field_channels, q = cfg_.coeff_channels, fw = cfg_.phys_struct_width;
  if (B < 1 || static_cast<Index>(in.tau.size()) != B) throw ArgumentError("embed: t and tau need one entry per sample");
  if (in.u.rows() != B * N || in.u.cols() != s) throw ArgumentError("embed: field does not match graph size");
  if (q > 0 && (in.c.rows() != B * N || in.c.cols() != q)) throw ArgumentError("embed: coefficients do not match");
  if (g.phys_struct.cols() != fw || g.reg_struct.cols() != cfg_.reg_struct_width) {
    throw ArgumentError("embed: structural feature width does not match the model");
  }

  Mat<S> x(B * N, cfg_.phys_input_width());
  for (Index b = 0; b < B; ++b) {
    auto blk = x.middleRows(b * N, N);
    blk.leftCols(s) = in.u.middleRows(b * N, N);
    blk.middleCols(s, fw) = g.phys_struct;
    if (q > 0) blk.middleCols(s + fw, q) = in.c.middleRows(b * N, N);
    blk.col(s + fw + q).setConstant(in.t[b]);
    blk.col(s + fw + q + 1).setConstant(in.tau[b]);
  }
  ad::Tape<S>& tape = *p.tape;
  st.vP = ff(p, emb_phys_, tape.constant(std::move(x)), st.tau, uniform_offsets(B, N));

  const Var<S> yr = ff_core(p, emb_reg_, tape.constant(g.reg_struct));
  {
    const auto [gm, lm] = cond_mlps(p, emb_reg_.cond, st.tau);
    st.vR = ad::condition(yr, gm, lm, st.tau, uniform_offsets(B, st.R), tile_rows(st.R, B));
  }
  const Index err = g.r2r_feats.rows();
  const Var<S> ye = ff_core(p, emb_r2r_, tape.constant(g.r2r_feats));
  {
    const auto [gm, lm] = cond_mlps(p, emb_r2r_.cond, st.tau);
    st.eRR = ad::condition(ye, gm, lm, st.tau, uniform_offsets(B, err), tile_rows(err, B));
  }
  st.p2r_norm = ff_core(p, emb_p2r_, tape.constant(g.p2r_feats));
  st.r2p_norm = ff_core(p, emb_r2p_, tape.constant(g.r2p_feats));
  return st;
}

template <typename S>
void Model<S>::encode(const Bound& p, const GraphTensors<S>& g, State<S>& st, const MaskPlan* mask) const {
  const Index B = st.B;
  const EdgeSelection sel =
      select_edges(g.p2r_send, g.p2r_recv, st.N, st.R, B, block_mask(mask, 0, B), false);
  const auto [gm, lm] = cond_mlps(p, emb_p2r_.cond, st.tau);
  const Var<S> edge = ad::condition(st.p2r_norm, gm, lm, st.tau, sel.offsets, sel.edge);
  const Var<S> msg = edge_ff(p, enc_edge_, st.vP, sel.send, st.vR, sel.recv, edge, st.tau, sel.offsets);
  const Var<S> agg = ad::scatter_mean(msg, sel.recv, B * st.R);
  st.vR = ad::add(st.vR, ff(p, enc_reg_, ad::concat_cols<S>({st.vR, agg}), st.tau, uniform_offsets(B, st.R)));
  st.vP = ad::add(st.vP, ff(p, enc_phys_, st.vP, st.tau, uniform_offsets(B, st.N)));
}

template <typename S>
void Model<S>::process(const Bound& p, const GraphTensors<S>& g, State<S>& st, const MaskPlan* mask) const {
  const Index B = st.B;
  for (int k = 0; k < cfg_.processor_steps; ++k) {
    const EdgeSelection sel =
        select_edges(g.r2r_send, g.r2r_recv, st.R, st.R, B, block_mask(mask, 1 + k, B), true);
    const Var<S> edge = ad::gather_rows(st.eRR, sel.edge);
    const Var<S> msg = edge_ff(p, proc_edge_[k], st.vR, sel.send, st.vR, sel.recv, edge, st.tau, sel.offsets);
    const Var<S> agg = ad::scatter_mean(msg, sel.recv, B * st.R);
    st.vR = ad::add(st.vR, ff(p, proc_node_[k], ad::concat_cols<S>({st.vR, agg}), st.tau, uniform_offsets(B, st.R)));
    st.eRR = ad::add_rows_at(st.eRR, msg, sel.edge);
  }
}

template <typename S>
Var<S> Model<S>::decode_latent(const Bound& p, const GraphTensors<S>& g, State<S>& st, const MaskPlan* mask) const {
  const Index B = st.B;
  const EdgeSelection sel = select_edges(g.r2p_send, g.r2p_recv, st.R, st.N, B,
                                         block_mask(mask, cfg_.processor_steps + 1, B), false);
  const auto [gm, lm] = cond_mlps(p, emb_r2p_.cond, st.tau);
  const Var<S> edge = ad::condition(st.r2p_norm, gm, lm, st.tau, sel.offsets, sel.edge);
  const Var<S> msg = edge_ff(p, dec_edge_, st.vR, sel.send, st.vP, sel.recv, edge, st.tau, sel.offsets);
  const Var<S> agg = ad::scatter_mean(msg, sel.recv, B * st.N);
  st.vP = ad::add(st.vP, ff(p, dec_phys_, ad::concat_cols<S>({st.vP, agg}), st.tau, uniform_offsets(B, st.N)));
  return st.vP;
}

template <typename S>
Var<S> Model<S>::output(const Bound& p, const Var<S>& latent) const {
  const auto& v = p.vars;
  return ad::affine(ad::swish(ad::affine(latent, v[out_.w1], v[out_.b1])), v[out_.w2], v[out_.b2]);
}

template <typename S>
Var<S> Model<S>::forward(const Bound& p, const GraphTensors<S>& g, const BatchInput<S>& in,
                         const MaskPlan* mask) const {
  State<S> st = embed(p, g, in);
  encode(p, g, st, mask);
  process(p, g, st, mask);
  return output(p, decode_latent(p, g, st, mask));
}

template <typename S>
std::vector<std::pair<std::string, Index>> Model<S>::describe() const {
  std::vector<std::pair<std::string, Index>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::string block = params_.names[i].substr(0, params_.names[i].rfind('/'));
    for (const char* sub : {"/gamma", "/lambda"}) {
      const std::string suffix(sub);
      if (block.size() > suffix.size() && block.compare(block.size() - suffix.size(), suffix.size(), suffix) == 0) {
        block.resize(block.size() - suffix.size());
      }
    }
    if (out.empty() || out.back().first != block) out.emplace_back(block, 0);
    out.back().second += params_.values[i].size();
  }
  return out;
}

template class Model<float>;
template class Model<double>;
template struct GraphTensors<float>;
template struct GraphTensors<double>;

}  // namespace rigno
