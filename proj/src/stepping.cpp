#include "rigno/stepping.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace rigno {

std::string to_string(StepKind k) {
  switch (k) {
    case StepKind::output: return "output";
    case StepKind::residual: return "residual";
    case StepKind::derivative: return "derivative";
  }
  return "derivative";
}

StepKind parse_step_kind(const std::string& s) {
  if (s == "output") return StepKind::output;
  if (s == "residual") return StepKind::residual;
  if (s == "derivative") return StepKind::derivative;
  throw ConfigError("unknown stepping strategy '" + s + "' (output, residual, derivative)");
}

Points NormStats::target(const Points& u_t, const Points& u_next, double tau) const {
  switch (kind) {
    case StepKind::output: return u_next;
    case StepKind::residual: return u_next - u_t;
    case StepKind::derivative:
      if (!(tau > 0.0)) throw ArgumentError("derivative target needs tau > 0");
      return (u_next - u_t) / tau;
  }
  return u_next;
}

Points NormStats::normalize_target(const Points& target) const {
  return ((target.rowwise() - target_mean).array().rowwise() / target_std.array()).matrix();
}

Points NormStats::denormalize_target(const Points& z) const {
  return ((z.array().rowwise() * target_std.array()).rowwise() + target_mean.array()).matrix();
}

Points NormStats::combine(const Points& u_t, const Points& z, double tau) const {
  if (tau < 0.0) throw ArgumentError("lead time must be >= 0");
  if (kind == StepKind::derivative && tau == 0.0) return u_t;
  const Points d = denormalize_target(z);
  switch (kind) {
    case StepKind::output: return d;
    case StepKind::residual: return u_t + d;
    case StepKind::derivative: return u_t + tau * d;
  }
  return d;
}

namespace {

// Two-pass per-channel mean and population std over a list of row blocks.
void pooled_stats(const std::vector<Points>& blocks, Index channels, Eigen::RowVectorXd& mean,
                  Eigen::RowVectorXd& sd) {
  mean = Eigen::RowVectorXd::Zero(channels);
  sd = Eigen::RowVectorXd::Ones(channels);
  double count = 0.0;
  for (const auto& b : blocks) {
    mean += b.colwise().sum();
    count += static_cast<double>(b.rows());
  }
  if (count == 0.0) return;
  mean /= count;
  Eigen::RowVectorXd ss = Eigen::RowVectorXd::Zero(channels);
  for (const auto& b : blocks) ss += (b.rowwise() - mean).array().square().matrix().colwise().sum();
  sd = (ss / count).array().sqrt().max(NormStats::kStdFloor).matrix();
}

}  // namespace

NormStats compute_norm_stats(const TrajectoryDataset& ds, const std::vector<TrainPair>& pairs, StepKind kind) {
  if (pairs.empty()) throw ArgumentError("compute_norm_stats: no training pairs");
  NormStats st;
  st.kind = kind;
  std::set<std::pair<Index, Index>> inputs, snapshots;
  std::set<Index> samples;
  double tau_max = 0.0;
  st.t_min = ds.times[static_cast<std::size_t>(pairs.front().k)];
  st.t_max = st.t_min;
  for (const auto& p : pairs) {
    if (p.sample < 0 || p.sample >= ds.num_samples || p.k < 0 || p.k > p.n || p.n >= ds.num_times()) {
      throw ArgumentError("compute_norm_stats: pair out of range");
    }
    inputs.insert({p.sample, p.k});
    snapshots.insert({p.sample, p.k});
    snapshots.insert({p.sample, p.n});
    samples.insert(p.sample);
    const double tk = ds.times[static_cast<std::size_t>(p.k)];
    st.t_min = std::min(st.t_min, tk);
    st.t_max = std::max(st.t_max, tk);
    tau_max = std::max(tau_max, ds.times[static_cast<std::size_t>(p.n)] - tk);
  }
  st.tau_max = tau_max > 0.0 ? tau_max : 1.0;

  std::vector<Points> blocks;
  for (const auto& [m, k] : inputs) blocks.push_back(ds.field(m, k));
  pooled_stats(blocks, ds.channels, st.u_mean, st.u_std);

  blocks.clear();
  for (const auto& [m, n] : snapshots) blocks.push_back(ds.field(m, n));
  pooled_stats(blocks, ds.channels, st.global_mean, st.global_std);

  blocks.clear();
  for (const auto& p : pairs) {
    const double tau = ds.times[static_cast<std::size_t>(p.n)] - ds.times[static_cast<std::size_t>(p.k)];
    if (kind == StepKind::derivative && p.n == p.k) continue;
    blocks.push_back(st.target(ds.field(p.sample, p.k), ds.field(p.sample, p.n), tau));
  }
  pooled_stats(blocks, ds.channels, st.target_mean, st.target_std);

  if (ds.coeff_channels > 0) {
    blocks.clear();
    for (Index m : samples) blocks.push_back(*ds.coeff(m));
    pooled_stats(blocks, ds.coeff_channels, st.c_mean, st.c_std);
  }
  return st;
}

template <typename S>
BatchInput<S> make_batch_input(const NormStats& stats, const std::vector<const Points*>& u,
                               const std::vector<const Points*>& c, const std::vector<double>& t,
                               const std::vector<double>& tau) {
  const auto B = static_cast<Index>(u.size());
  if (B < 1 || static_cast<Index>(t.size()) != B || static_cast<Index>(tau.size()) != B) {
    throw ArgumentError("batch input: u, t and tau must have one entry per sample");
  }
  const Index N = u.front()->rows(), s = u.front()->cols();
  if (s != stats.channels()) throw ArgumentError("batch input: channel count does not match the statistics");
  const Index q = stats.c_mean.size();
  if (q > 0 && static_cast<Index>(c.size()) != B) throw ArgumentError("batch input: coefficients missing");
  BatchInput<S> in;
  in.u.resize(B * N, s);
  if (q > 0) in.c.resize(B * N, q);
  for (Index b = 0; b < B; ++b) {
    if (u[b]->rows() != N || u[b]->cols() != s) throw ArgumentError("batch input: field shapes differ");
    if (tau[b] < 0.0) throw ArgumentError("lead time must be >= 0");
    in.u.middleRows(b * N, N) =
        ((u[b]->rowwise() - stats.u_mean).array().rowwise() / stats.u_std.array()).matrix().template cast<S>();
    if (q > 0) {
      if (!c[b] || c[b]->rows() != N || c[b]->cols() != q) throw ArgumentError("batch input: coefficient shape");
      in.c.middleRows(b * N, N) =
          ((c[b]->rowwise() - stats.c_mean).array().rowwise() / stats.c_std.array()).matrix().template cast<S>();
    }
    in.t.push_back(static_cast<S>(stats.norm_t(t[b])));
    in.tau.push_back(static_cast<S>(stats.norm_tau(tau[b])));
  }
  return in;
}

template <typename S>
std::vector<Points> step_batch(const Model<S>& model, const GraphTensors<S>& graph, const NormStats& stats,
                               const std::vector<const Points*>& u, const std::vector<const Points*>& c,
                               const std::vector<double>& t, const std::vector<double>& tau, const MaskPlan* mask) {
  const auto B = static_cast<Index>(u.size());
  std::vector<Points> out(static_cast<std::size_t>(B));
  bool all_identity = stats.kind == StepKind::derivative;
  for (double v : tau) {
    if (v < 0.0) throw ArgumentError("lead time must be >= 0");
    all_identity = all_identity && v == 0.0;
  }
  if (all_identity) {
    for (Index b = 0; b < B; ++b) out[b] = *u[b];
    return out;
  }
  const BatchInput<S> in = make_batch_input<S>(stats, u, c, t, tau);
  ad::Tape<S> tape;
  ad::NoGrad<S> no_grad(tape);
  const ad::Mat<S> z = model.forward(model.bind(tape), graph, in, mask).value();
  const Index N = u.front()->rows();
  for (Index b = 0; b < B; ++b) {
    out[b] = stats.combine(*u[b], z.middleRows(b * N, N).template cast<double>(), tau[b]);
  }
  return out;
}

template <typename S>
Points step(const Model<S>& model, const GraphTensors<S>& graph, const NormStats& stats, const Points& u,
            const Points* c, double t, double tau, const MaskPlan* mask) {
  return step_batch<S>(model, graph, stats, {&u}, {c}, {t}, {tau}, mask).front();
}

#define RIGNO_INSTANTIATE(S)                                                                                    \
  template BatchInput<S> make_batch_input<S>(const NormStats&, const std::vector<const Points*>&,              \
                                             const std::vector<const Points*>&, const std::vector<double>&,    \
                                             const std::vector<double>&);                                      \
  template std::vector<Points> step_batch<S>(const Model<S>&, const GraphTensors<S>&, const NormStats&,        \
                                             const std::vector<const Points*>&,                                \
                                             const std::vector<const Points*>&, const std::vector<double>&,    \
                                             const std::vector<double>&, const MaskPlan*);                     \
  template Points step<S>(const Model<S>&, const GraphTensors<S>&, const NormStats&, const Points&,            \
                          const Points*, double, double, const MaskPlan*);

RIGNO_INSTANTIATE(float)
RIGNO_INSTANTIATE(double)

}  // namespace rigno
