#pragma once

#include <string>
#include <vector>

#include "rigno/data.hpp"
#include "rigno/model.hpp"

namespace rigno {

enum class StepKind { output, residual, derivative };

std::string to_string(StepKind k);
StepKind parse_step_kind(const std::string& s);

/// u(t + tau) = alpha u(t) + beta * target.
inline double step_alpha(StepKind k) { return k == StepKind::output ? 0.0 : 1.0; }
inline double step_beta(StepKind k, double tau) { return k == StepKind::derivative ? tau : 1.0; }

/// Training example: sample m, input snapshot k, target snapshot n (k <= n).
struct TrainPair {
  Index sample = 0;
  Index k = 0;
  Index n = 0;
  bool operator==(const TrainPair&) const = default;
};

struct NormStats {
  StepKind kind = StepKind::derivative;
  Eigen::RowVectorXd u_mean, u_std;            // input field
  Eigen::RowVectorXd target_mean, target_std;  // strategy target
  Eigen::RowVectorXd c_mean, c_std;            // coefficients (empty when q = 0)
  Eigen::RowVectorXd global_mean, global_std;  // metric normalization
  double t_min = 0.0, t_max = 1.0;
  double tau_max = 1.0;  // largest training lead time

  static constexpr double kStdFloor = 1e-8;

  Index channels() const { return u_mean.size(); }
  double norm_t(double t) const { return t_max > t_min ? (t - t_min) / (t_max - t_min) : 0.0; }
  double norm_tau(double tau) const { return tau / tau_max; }

  /// Raw strategy target for one transition.
  Points target(const Points& u_t, const Points& u_next, double tau) const;
  Points normalize_target(const Points& target) const;
  Points denormalize_target(const Points& z) const;
  /// alpha u + beta * denormalized z; the derivative kind returns u itself at tau = 0.
  Points combine(const Points& u_t, const Points& z, double tau) const;
};

/// Exact pooled statistics over the cited pairs. Derivative targets skip tau = 0 pairs.
NormStats compute_norm_stats(const TrajectoryDataset& ds, const std::vector<TrainPair>& pairs, StepKind kind);

/// Model input for a batch of transitions sharing one graph.
template <typename S>
BatchInput<S> make_batch_input(const NormStats& stats, const std::vector<const Points*>& u,
                               const std::vector<const Points*>& c, const std::vector<double>& t,
                               const std::vector<double>& tau);

/// One step for every batch member: predicted u(t + tau).
template <typename S>
std::vector<Points> step_batch(const Model<S>& model, const GraphTensors<S>& graph, const NormStats& stats,
                               const std::vector<const Points*>& u, const std::vector<const Points*>& c,
                               const std::vector<double>& t, const std::vector<double>& tau,
                               const MaskPlan* mask = nullptr);

template <typename S>
Points step(const Model<S>& model, const GraphTensors<S>& graph, const NormStats& stats, const Points& u,
            const Points* c, double t, double tau, const MaskPlan* mask = nullptr);

}  // namespace rigno
