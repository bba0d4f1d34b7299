#pragma once

#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rigno/checkpoint.hpp"
#include "rigno/data.hpp"
#include "rigno/optim.hpp"

namespace rigno {

/// All (k, n) with 0 <= k <= n <= last and n - k <= max_lead (max_lead <= 0: no cap).
std::vector<std::pair<Index, Index>> all2all_pairs(Index last, Index max_lead = 0);

/// Pairs whose lead is admitted at this point of training. During the first
/// curriculum_fraction of epochs the distinct positive leads are admitted in
/// equal slices, smallest first; zero-lead pairs are always kept.
std::vector<std::pair<Index, Index>> curriculum_filter(const std::vector<std::pair<Index, Index>>& pairs,
                                                       double epoch_fraction, double curriculum_fraction,
                                                       Index base_step);

struct TrainConfig {
  int epochs = 100;
  Index batch_size = 16;
  Index stride = 2;       // snapshot stride of the training data
  Index last_index = 14;  // last training snapshot
  Index max_lead = 0;     // cap on n - k in grid steps; 0 means none
  double curriculum_fraction = 0.2;
  StepKind kind = StepKind::derivative;
  double mask_prob = 0.5;
  LrSchedule lr;
  AdamWConfig adamw;
  int val_every = 10;
  std::uint64_t seed = 0;
  bool deterministic = true;

  // Fractional pairing
  bool finetune = false;
  double finetune_fraction = 0.1;  // of epochs
  bool gradcut = true;

  void validate() const;
  /// Training snapshots 0, stride, ..., last_index as grid-index pairs.
  std::vector<std::pair<Index, Index>> pairs() const;
  int finetune_epochs() const;
};

struct LogRow {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double val = std::numeric_limits<double>::quiet_NaN();  // NaN when not validated
};

void write_log_csv(const std::string& path, const std::vector<LogRow>& log);

struct TrainHooks {
  /// Sees each validation result and may replace it.
  std::function<double(int epoch, double val)> on_validation;
  std::function<void(const LogRow&)> on_epoch;
  /// Parameters at the end of every epoch.
  std::function<void(int epoch, const ParamSet<float>&)> on_params;
};

struct TrainResult {
  TrainedModel model;  // best-validation parameters (last ones without validation data)
  std::vector<LogRow> log;
  double best_val = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = -1;
};

/// Mean squared error in normalized space between the network output for
/// u(t) -> u(t + tau) and the strategy target built from u_next. Derivative
/// members with zero lead contribute zero but still count towards the mean.
/// Fills `grads` (one per parameter) when given.
double transition_loss(const Model<float>& model, const GraphTensors<float>& graph, const NormStats& stats,
                       const std::vector<const Points*>& u, const std::vector<const Points*>& c,
                       const std::vector<double>& t, const std::vector<double>& tau,
                       const std::vector<const Points*>& u_next, double mask_prob, std::uint64_t mask_seed,
                       std::vector<ad::Mat<float>>* grads);

/// transition_loss over dataset pairs.
double batch_loss(const Model<float>& model, const GraphTensors<float>& graph, const NormStats& stats,
                  const TrajectoryDataset& ds, const std::vector<TrainPair>& batch, double mask_prob,
                  std::uint64_t mask_seed, std::vector<ad::Mat<float>>* grads);

/// Median relative L1 at the last training snapshot under AR-stride rollout.
double validation_error(const Model<float>& model, const RegionalGraph& graph, const NormStats& stats,
                        const TrajectoryDataset& val, Index stride, Index last_index);

TrainResult train(const TrajectoryDataset& data, const TrajectoryDataset* val, const ModelConfig& mcfg,
                  const GraphConfig& gcfg, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Fractional-pairing example: input snapshot k, intermediate grid index mid, target n.
struct FractionalExample {
  Index sample = 0;
  Index k = 0;
  Index mid = 0;
  Index n = 0;
};

/// Intermediate indices j with k < j < n, j - k >= stride and n - j < stride.
std::vector<Index> admissible_midpoints(Index k, Index n, Index stride);

/// First hop k -> mid with the current model and no gradient through it,
/// then the loss of mid -> n against the data.
double fractional_loss(const Model<float>& model, const GraphTensors<float>& graph, const NormStats& stats,
                       const TrajectoryDataset& ds, const std::vector<FractionalExample>& batch, double mask_prob,
                       std::uint64_t mask_seed, std::vector<ad::Mat<float>>* grads);

struct FinetuneResult {
  TrainedModel model;
  std::vector<LogRow> log;
};

FinetuneResult fractional_finetune(const TrainedModel& start, const TrajectoryDataset& data,
                                   const TrajectoryDataset* val, const TrainConfig& cfg,
                                   const TrainHooks& hooks = {});

}  // namespace rigno
