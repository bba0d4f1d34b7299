#pragma once

#include <string>
#include <vector>

#include "rigno/checkpoint.hpp"
#include "rigno/data.hpp"

namespace rigno {

/// Lead times in snapshot-index units of the dataset's time grid.
struct RolloutScheme {
  std::string name;
  std::vector<Index> leads;

  Index total() const;
  void validate() const;

  /// Steps of `stride` with a shorter last step if needed (AR-2, AR-4, ...).
  static RolloutScheme autoregressive(Index stride, Index target);
  static RolloutScheme direct(Index target);
  static RolloutScheme custom(std::vector<Index> leads);
  /// "ar<k>", "dr" or "custom:a,b,c"; ar/dr reach `target`.
  static RolloutScheme parse(const std::string& spec, Index target);
};

/// Comma-separated scheme list; numbers following a custom scheme extend it
/// ("ar2,custom:1,2,dr" is three schemes).
std::vector<RolloutScheme> parse_scheme_list(const std::string& list, Index target);

/// The reported scheme set: AR-2, AR-4 and DR to `target`.
std::vector<RolloutScheme> standard_schemes(Index target);

/// A trained model bound to one graph of one point cloud.
struct Predictor {
  Model<float> model;
  GraphTensors<float> graph;
  NormStats stats;
  Index batch_size = 16;

  Predictor(const TrainedModel& m, const RegionalGraph& g, Index batch = 16);
  Predictor(Model<float> model, const RegionalGraph& g, NormStats stats, Index batch = 16);
};

/// Graph used for evaluation on a cloud. At the training point count this is
/// the standard build; otherwise the regional count is held at the trained R.
RegionalGraph evaluation_graph(const TrainedModel& m, const PointCloud& cloud, std::uint64_t seed);

/// Edge-masking settings for stochastic inference.
struct MaskSettings {
  double prob = 0.0;
  std::uint64_t seed = 0;
};

/// Predicted fields at the scheme's cumulative times, for each listed sample:
/// result[i][j] is sample samples[i] after j + 1 steps. `start` fields replace
/// the dataset's snapshot at start_index when given (noisy inputs).
std::vector<std::vector<Points>> rollout(const Predictor& p, const TrajectoryDataset& ds,
                                         const std::vector<Index>& samples, Index start_index,
                                         const RolloutScheme& scheme, const MaskSettings* mask = nullptr,
                                         const std::vector<Points>* start = nullptr);

struct EnsembleResult {
  Points mean;
  Points std;
  Index members = 0;
};

/// K masked rollouts of each sample; statistics of the final prediction.
std::vector<EnsembleResult> ensemble_rollout(const Predictor& p, const TrajectoryDataset& ds,
                                             const std::vector<Index>& samples, Index start_index,
                                             const RolloutScheme& scheme, Index members, double mask_prob,
                                             std::uint64_t seed);

/// Mean over channel groups of sum|pred - truth| / sum|truth| after global
/// normalization. Empty groups means one group per channel.
double relative_l1(const Points& pred, const Points& truth, const Eigen::RowVectorXd& global_mean,
                   const Eigen::RowVectorXd& global_std, const std::vector<std::vector<Index>>& groups = {});

double median(std::vector<double> v);

/// Spearman rank correlation with tie-averaged ranks.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Per-sample error at the end of the scheme.
std::vector<double> scheme_errors(const Predictor& p, const TrajectoryDataset& ds, const RolloutScheme& scheme,
                                  Index start_index = 0);

struct SchemeReport {
  std::string scheme;
  std::vector<double> errors;  // per sample
  double median = 0.0;
};

struct EvaluationReport {
  std::vector<SchemeReport> schemes;
  double best_median = 0.0;  // minimum over the standard schemes
};

EvaluationReport evaluate(const Predictor& p, const TrajectoryDataset& ds, const std::vector<RolloutScheme>& schemes,
                          Index start_index = 0);

struct NoiseResult {
  double c = 0.0;
  double induced = 0.0;  // mean over samples of |e_noisy - e_clean| / e_clean
  std::vector<double> per_sample;
};

/// Gaussian input noise with std C * sigma(u0) per sample; induced error at the end of the scheme.
std::vector<NoiseResult> noise_eval(const Predictor& p, const TrajectoryDataset& ds, const std::vector<double>& levels,
                                    const RolloutScheme& scheme, std::uint64_t seed);

struct ResolutionRow {
  Index points = 0;
  Index regional = 0;
  double median = 0.0;  // best scheme
};

/// Each dataset holds the same trajectories at another resolution.
std::vector<ResolutionRow> evaluate_resolution(const TrainedModel& m, const std::vector<TrajectoryDataset>& datasets,
                                               const std::vector<RolloutScheme>& schemes, std::uint64_t seed);

}  // namespace rigno
