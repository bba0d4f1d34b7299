#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rigno/autodiff.hpp"
#include "rigno/graphs.hpp"
#include "rigno/optim.hpp"
#include "rigno/rng.hpp"

namespace rigno {

struct ModelConfig {
  int latent = 128;
  int hidden = 128;
  int cond_hidden = 16;
  int processor_steps = 18;
  int field_channels = 1;
  int coeff_channels = 0;
  int phys_struct_width = 2;  // node_feature_width(domain, k_freq)
  int reg_struct_width = 3;   // phys_struct_width + 1 (radius)
  int edge_struct_width = 3;
  double norm_eps = 1e-6;

  void validate() const;
  int phys_input_width() const { return field_channels + phys_struct_width + coeff_channels + 2; }
  /// Widths derived from the domain: struct features follow the periodicity flags.
  static ModelConfig for_domain(const Domain& domain, int k_freq, int field_channels, int coeff_channels);
};

/// Per message-passing block (encoder, each processor block, decoder) and per
/// batch member, the ids of the edges that survive masking.
struct MaskPlan {
  std::vector<std::vector<std::vector<std::int32_t>>> kept;  // [block][sample] -> sorted edge ids

  /// Independent Bernoulli(1 - p) per edge, block and sample.
  static MaskPlan sample(double p, std::uint64_t seed, Index p2r_edges, Index r2r_edges, Index r2p_edges,
                         int processor_steps, Index batch);
};

/// Graph data in the model's scalar type, built once per graph.
template <typename S>
struct GraphTensors {
  Index num_physical = 0;
  Index num_regional = 0;
  ad::Mat<S> phys_struct, reg_struct, p2r_feats, r2r_feats, r2p_feats;
  std::vector<std::int32_t> p2r_send, p2r_recv, r2r_send, r2r_recv, r2p_send, r2p_recv;

  static GraphTensors from_graph(const RegionalGraph& g);
};

/// One forward batch: B samples sharing the graph, stacked sample-major.
template <typename S>
struct BatchInput {
  ad::Mat<S> u;         // (B N) x s, normalized
  ad::Mat<S> c;         // (B N) x q, normalized (empty when q = 0)
  std::vector<S> t;     // normalized time per sample
  std::vector<S> tau;   // normalized lead time per sample

  Index batch() const { return static_cast<Index>(t.size()); }
};

/// Latent state between the stages of a forward pass.
template <typename S>
struct State {
  Index B = 0, N = 0, R = 0;
  std::vector<S> tau;
  ad::Var<S> vP;        // (B N) x L
  ad::Var<S> vR;        // (B R) x L
  ad::Var<S> eRR;       // (B E_rr) x L
  ad::Var<S> p2r_norm;  // E_p2r x L, shared, before conditioning
  ad::Var<S> r2p_norm;  // E_r2p x L, shared, before conditioning
};

template <typename S>
class Model {
 public:
  struct CondRef {
    int g_w1 = -1, g_b1, g_w2, g_b2, l_w1, l_b1, l_w2, l_b2;
  };
  struct FFRef {
    int w1, b1, w2, b2;
    CondRef cond;
  };
  struct EdgeFFRef {
    int w_send, w_recv, w_edge, b1, w2, b2;
    CondRef cond;
  };
  struct MlpRef {
    int w1, b1, w2, b2;
  };

  /// Tape-bound view of the parameters for one forward pass.
  struct Bound {
    ad::Tape<S>* tape = nullptr;
    std::vector<ad::Var<S>> vars;
  };

  Model() = default;
  Model(const ModelConfig& cfg, std::uint64_t seed);
  /// Rebuilds the block structure and takes over stored values (names must match).
  Model(const ModelConfig& cfg, ParamSet<S> params);

  const ModelConfig& config() const { return cfg_; }
  const ParamSet<S>& params() const { return params_; }
  ParamSet<S>& params() { return params_; }
  Index parameter_count() const { return params_.count(); }

  Bound bind(ad::Tape<S>& tape) const;
  /// Gradients of every parameter after tape.backward().
  std::vector<ad::Mat<S>> gradients(const Bound& bound) const;

  State<S> embed(const Bound& p, const GraphTensors<S>& g, const BatchInput<S>& in) const;
  void encode(const Bound& p, const GraphTensors<S>& g, State<S>& st, const MaskPlan* mask) const;
  void process(const Bound& p, const GraphTensors<S>& g, State<S>& st, const MaskPlan* mask) const;
  /// Decoder message passing and residual update; returns the physical latents.
  ad::Var<S> decode_latent(const Bound& p, const GraphTensors<S>& g, State<S>& st, const MaskPlan* mask) const;
  ad::Var<S> output(const Bound& p, const ad::Var<S>& latent) const;

  /// embed, encode, process, decode. Raw network output, (B N) x s.
  ad::Var<S> forward(const Bound& p, const GraphTensors<S>& g, const BatchInput<S>& in, const MaskPlan* mask) const;

  /// Parameter count per block, in creation order.
  std::vector<std::pair<std::string, Index>> describe() const;

  template <typename T>
  Model<T> cast() const {
    return Model<T>(cfg_, params_.template cast<T>());
  }

 private:
  ModelConfig cfg_;
  ParamSet<S> params_;
  FFRef emb_phys_, emb_reg_, emb_p2r_, emb_r2r_, emb_r2p_;
  EdgeFFRef enc_edge_;
  FFRef enc_reg_, enc_phys_;
  std::vector<EdgeFFRef> proc_edge_;
  std::vector<FFRef> proc_node_;
  EdgeFFRef dec_edge_;
  FFRef dec_phys_;
  MlpRef out_;

  void build(Rng* rng);
  int param(const std::string& name, Index rows, Index cols, Rng* rng, double bound);
  CondRef make_cond(const std::string& name, Index width, Rng* rng);
  FFRef make_ff(const std::string& name, Index in, Index out, Rng* rng);
  EdgeFFRef make_edge_ff(const std::string& name, Index send, Index recv, Index edge, Index out, Rng* rng);

  std::pair<ad::Var<S>, ad::Var<S>> cond_mlps(const Bound& p, const CondRef& c, const std::vector<S>& tau) const;
  /// affine, swish, affine, layer norm; the shared part of every FF.
  ad::Var<S> ff_core(const Bound& p, const FFRef& f, const ad::Var<S>& x) const;
  ad::Var<S> ff(const Bound& p, const FFRef& f, const ad::Var<S>& x, const std::vector<S>& tau,
                const std::vector<Index>& offsets, const ad::Indices& src = nullptr) const;
  ad::Var<S> edge_ff(const Bound& p, const EdgeFFRef& f, const ad::Var<S>& send, const ad::Indices& send_idx,
                     const ad::Var<S>& recv, const ad::Indices& recv_idx, const ad::Var<S>& edge,
                     const std::vector<S>& tau, const std::vector<Index>& offsets) const;
};

/// Offsets of B equal segments of n rows.
std::vector<Index> uniform_offsets(Index batch, Index n);

extern template class Model<float>;
extern template class Model<double>;
extern template struct GraphTensors<float>;
extern template struct GraphTensors<double>;

}  // namespace rigno
