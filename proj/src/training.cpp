#include "rigno/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <Eigen/Core>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "rigno/inference.hpp"

namespace rigno {

namespace {

// Stream tags for derive_rng.
constexpr std::uint64_t kGraphStream = 0x67726170680000ULL;
constexpr std::uint64_t kEpochStream = 0x65706f63680000ULL;
constexpr std::uint64_t kMaskStream = 0x6d61736b000000ULL;
constexpr std::uint64_t kValStream = 0x76616c00000000ULL;
constexpr std::uint64_t kFineStream = 0x66696e65000000ULL;

std::uint64_t batch_seed(std::uint64_t seed, std::uint64_t tag, int epoch, Index batch) {
  return splitmix64(splitmix64(seed ^ tag) + static_cast<std::uint64_t>(epoch) * 0x100000ULL +
                    static_cast<std::uint64_t>(batch));
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

bool all_finite(const std::vector<ad::Mat<float>>& g) {
  for (const auto& m : g) {
    if (!m.allFinite()) return false;
  }
  return true;
}

[[noreturn]] void nan_abort(const char* stage, int epoch, Index batch) {
  std::ostringstream os;
  os << stage << ": non-finite loss or gradient at epoch " << epoch << ", batch " << batch;
  throw TrainingError(os.str());
}

void check_dataset(const TrajectoryDataset& ds, const TrainConfig& cfg, const char* what) {
  if (ds.num_samples < 1) throw ArgumentError(std::string(what) + ": need at least one sample");
  if (cfg.last_index >= ds.num_times()) {
    throw ArgumentError(std::string(what) + ": last_index beyond the dataset's snapshots");
  }
  const double dt = ds.times[1] - ds.times[0];
  for (std::size_t i = 1; i < ds.times.size(); ++i) {
    if (std::abs(ds.times[i] - ds.times[i - 1] - dt) > 1e-6 * std::max(std::abs(dt), 1e-300) + 1e-12) {
      throw ArgumentError(std::string(what) + ": snapshots must be uniformly spaced");
    }
  }
}

void set_threads_for(const TrainConfig& cfg) {
  if (cfg.deterministic) Eigen::setNbThreads(1);
#ifdef __GLIBC__
  // Every step allocates and frees the same large activations; keeping them
  // on the heap avoids page-faulting fresh memory each batch.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, std::numeric_limits<int>::max());
#endif
}

}  // namespace

std::vector<std::pair<Index, Index>> all2all_pairs(Index last, Index max_lead) {
  if (last < 0) throw ArgumentError("all2all_pairs: last index must be >= 0");
  std::vector<std::pair<Index, Index>> out;
  for (Index k = 0; k <= last; ++k) {
    for (Index n = k; n <= last; ++n) {
      if (max_lead > 0 && n - k > max_lead) break;
      out.emplace_back(k, n);
    }
  }
  return out;
}

std::vector<std::pair<Index, Index>> curriculum_filter(const std::vector<std::pair<Index, Index>>& pairs,
                                                       double epoch_fraction, double curriculum_fraction,
                                                       Index base_step) {
  if (curriculum_fraction < 0.0 || curriculum_fraction > 1.0) {
    throw ArgumentError("curriculum fraction must lie in [0, 1]");
  }
  if (base_step < 1) throw ArgumentError("curriculum_filter: base step must be positive");
  if (epoch_fraction >= curriculum_fraction) return pairs;
  std::set<Index> leads;
  for (const auto& [k, n] : pairs) {
    if (n > k) leads.insert(n - k);
  }
  if (leads.empty()) return pairs;
  const auto S = static_cast<double>(leads.size());
  const auto admitted = static_cast<std::size_t>(
      std::clamp(std::ceil(S * std::max(0.0, epoch_fraction) / curriculum_fraction), 1.0, S));
  const Index max_lead = *std::next(leads.begin(), static_cast<std::ptrdiff_t>(admitted - 1));
  std::vector<std::pair<Index, Index>> out;
  for (const auto& p : pairs) {
    if (p.second - p.first <= max_lead) out.push_back(p);
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (last_index < 0 || last_index % stride != 0) throw ConfigError("last_index must be a multiple of stride");
  if (max_lead < 0) throw ConfigError("max_lead must be >= 0");
  if (!(curriculum_fraction >= 0.0 && curriculum_fraction <= 1.0)) {
    throw ConfigError("curriculum_fraction must lie in [0, 1]");
  }
  if (!(mask_prob >= 0.0 && mask_prob < 1.0)) throw ConfigError("mask_prob must lie in [0, 1)");
  if (val_every < 1) throw ConfigError("val_every must be >= 1");
  if (!(finetune_fraction > 0.0)) throw ConfigError("finetune_fraction must be positive");
  if (!gradcut) throw ConfigError("fractional pairing without GradCut is not supported");
}

std::vector<std::pair<Index, Index>> TrainConfig::pairs() const {
  auto p = all2all_pairs(last_index / stride, max_lead > 0 ? std::max<Index>(1, max_lead / stride) : 0);
  for (auto& [k, n] : p) {
    k *= stride;
    n *= stride;
  }
  return p;
}

int TrainConfig::finetune_epochs() const {
  return std::max(1, static_cast<int>(std::ceil(finetune_fraction * epochs)));
}

void write_log_csv(const std::string& path, const std::vector<LogRow>& log) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path);
  out << "epoch,lr,train_loss,val_rel_l1\n" << std::setprecision(9);
  for (const auto& r : log) {
    out << r.epoch << ',' << r.lr << ',' << r.loss << ',';
    if (!std::isnan(r.val)) out << r.val;
    out << '\n';
  }
}

double transition_loss(const Model<float>& model, const GraphTensors<float>& graph, const NormStats& stats,
                       const std::vector<const Points*>& u, const std::vector<const Points*>& c,
                       const std::vector<double>& t, const std::vector<double>& tau,
                       const std::vector<const Points*>& u_next, double mask_prob, std::uint64_t mask_seed,
                       std::vector<ad::Mat<float>>* grads) {
  const std::size_t B = u.size();
  if (B == 0 || t.size() != B || tau.size() != B || u_next.size() != B) {
    throw ArgumentError("transition_loss: one entry per member required");
  }
  // Members whose prediction is the input itself carry no target.
  std::vector<const Points*> uu, cc, target_src;
  std::vector<double> tt, ttau;
  for (std::size_t b = 0; b < B; ++b) {
    if (stats.kind == StepKind::derivative && tau[b] == 0.0) continue;
    uu.push_back(u[b]);
    if (!c.empty()) cc.push_back(c[b]);
    tt.push_back(t[b]);
    ttau.push_back(tau[b]);
    target_src.push_back(u_next[b]);
  }
  if (grads) {
    grads->clear();
    for (const auto& p : model.params().values) grads->push_back(ad::Mat<float>::Zero(p.rows(), p.cols()));
  }
  if (uu.empty()) return 0.0;

  const auto Bk = static_cast<Index>(uu.size());
  const Index N = uu.front()->rows(), s = uu.front()->cols();
  ad::Mat<float> target(Bk * N, s);
  for (Index b = 0; b < Bk; ++b) {
    const Points z = stats.normalize_target(stats.target(*uu[b], *target_src[b], ttau[b]));
    target.middleRows(b * N, N) = z.cast<float>();
  }
  const BatchInput<float> in = make_batch_input<float>(stats, uu, cc, tt, ttau);
  MaskPlan plan;
  const MaskPlan* plan_ptr = nullptr;
  if (mask_prob > 0.0) {
    plan = MaskPlan::sample(mask_prob, mask_seed, static_cast<Index>(graph.p2r_send.size()),
                            static_cast<Index>(graph.r2r_send.size()), static_cast<Index>(graph.r2p_send.size()),
                            model.config().processor_steps, Bk);
    plan_ptr = &plan;
  }
  ad::Tape<float> tape;
  if (!grads) tape.set_grad_enabled(false);
  const auto bound = model.bind(tape);
  const auto out = model.forward(bound, graph, in, plan_ptr);
  const double scale = 1.0 / (static_cast<double>(B) * static_cast<double>(N) * static_cast<double>(s));
  const auto loss = ad::sum_sq_diff(out, tape.constant(std::move(target)), scale);
  const double value = static_cast<double>(loss.value()(0, 0));
  if (grads) {
    tape.backward(loss);
    *grads = model.gradients(bound);
  }
  return value;
}

double batch_loss(const Model<float>& model, const GraphTensors<float>& graph, const NormStats& stats,
                  const TrajectoryDataset& ds, const std::vector<TrainPair>& batch, double mask_prob,
                  std::uint64_t mask_seed, std::vector<ad::Mat<float>>* grads) {
  std::vector<const Points*> u, c, next;
  std::vector<double> t, tau;
  for (const auto& p : batch) {
    u.push_back(&ds.field(p.sample, p.k));
    next.push_back(&ds.field(p.sample, p.n));
    if (ds.coeff_channels > 0) c.push_back(ds.coeff(p.sample));
    t.push_back(ds.times[static_cast<std::size_t>(p.k)]);
    tau.push_back(ds.times[static_cast<std::size_t>(p.n)] - t.back());
  }
  return transition_loss(model, graph, stats, u, c, t, tau, next, mask_prob, mask_seed, grads);
}

double validation_error(const Model<float>& model, const RegionalGraph& graph, const NormStats& stats,
                        const TrajectoryDataset& val, Index stride, Index last_index) {
  const Predictor p(model, graph, stats);
  return median(scheme_errors(p, val, RolloutScheme::autoregressive(stride, last_index)));
}

TrainResult train(const TrajectoryDataset& data, const TrajectoryDataset* val, const ModelConfig& mcfg,
                  const GraphConfig& gcfg, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  gcfg.validate();
  mcfg.validate();
  check_dataset(data, cfg, "train");
  if (mcfg.field_channels != data.channels || mcfg.coeff_channels != data.coeff_channels) {
    throw ConfigError("model channel counts do not match the dataset");
  }
  if (val && (val->num_points() != data.num_points() || cfg.last_index >= val->num_times())) {
    throw ArgumentError("train: validation set must share the training cloud and time grid");
  }
  set_threads_for(cfg);

  const auto kn = cfg.pairs();
  std::vector<TrainPair> all;
  for (Index m = 0; m < data.num_samples; ++m) {
    for (const auto& [k, n] : kn) all.push_back({m, k, n});
  }

  TrainResult res;
  TrainedModel& tm = res.model;
  tm.model = mcfg;
  tm.graph = gcfg;
  tm.stats = quantize(compute_norm_stats(data, all, cfg.kind));
  tm.mask_prob = cfg.mask_prob;
  tm.periodic = data.cloud.domain.periodic;

  Model<float> model(mcfg, splitmix64(cfg.seed ^ 0x696e6974ULL));
  AdamW<float> opt(cfg.adamw);

  std::optional<RegionalGraph> val_graph;
  if (val) {
    Rng vr = derive_rng(cfg.seed, kValStream);
    val_graph = build_graph(val->cloud, gcfg, vr);
  }

  const Index M = data.num_samples;
  const Index batches = (M + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(cfg.epochs) * static_cast<double>(batches);
  long step = 0;
  ParamSet<float> best = model.params();

  for (int e = 0; e < cfg.epochs; ++e) {
    Rng grng = derive_rng(cfg.seed, kGraphStream + static_cast<std::uint64_t>(e));
    const RegionalGraph g = build_graph(data.cloud, gcfg, grng);
    if (e == 0) tm.regional_count = g.num_regional();
    const auto gt = GraphTensors<float>::from_graph(g);

    const double ef = static_cast<double>(e) / static_cast<double>(cfg.epochs);
    const auto active = curriculum_filter(kn, ef, cfg.curriculum_fraction, cfg.stride);
    Rng erng = derive_rng(cfg.seed, kEpochStream + static_cast<std::uint64_t>(e));
    std::vector<TrainPair> epoch_pairs;
    for (Index m = 0; m < M; ++m) {
      const auto& [k, n] = active[uniform_index(erng, active.size())];
      epoch_pairs.push_back({m, k, n});
    }
    shuffle(epoch_pairs, erng);

    LogRow row;
    row.epoch = e;
    double loss_sum = 0.0;
    std::vector<ad::Mat<float>> grads;
    for (Index b = 0; b < batches; ++b) {
      const auto first = epoch_pairs.begin() + b * cfg.batch_size;
      const auto last = epoch_pairs.begin() + std::min<Index>(M, (b + 1) * cfg.batch_size);
      const std::vector<TrainPair> batch(first, last);
      const double lr = cfg.lr(static_cast<double>(step) / total_steps);
      const double loss = batch_loss(model, gt, tm.stats, data, batch, cfg.mask_prob,
                                     batch_seed(cfg.seed, kMaskStream, e, b), &grads);
      if (!std::isfinite(loss) || !all_finite(grads)) nan_abort("train", e, b);
      opt.step(model.params(), grads, lr);
      loss_sum += loss;
      row.lr = lr;
      ++step;
    }
    row.loss = loss_sum / static_cast<double>(batches);

    const bool validate_now = val && ((e + 1) % cfg.val_every == 0 || e + 1 == cfg.epochs);
    if (validate_now) {
      double v = validation_error(model, *val_graph, tm.stats, *val, cfg.stride, cfg.last_index);
      if (hooks.on_validation) v = hooks.on_validation(e, v);
      row.val = v;
      if (res.best_epoch < 0 || v < res.best_val) {
        res.best_val = v;
        res.best_epoch = e;
        best = model.params();
      }
    }
    res.log.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row);
    if (hooks.on_params) hooks.on_params(e, model.params());
  }
  tm.params = val ? best : model.params();
  return res;
}

std::vector<Index> admissible_midpoints(Index k, Index n, Index stride) {
  std::vector<Index> out;
  for (Index j = k + 1; j < n; ++j) {
    if (j - k >= stride && n - j < stride) out.push_back(j);
  }
  return out;
}

double fractional_loss(const Model<float>& model, const GraphTensors<float>& graph, const NormStats& stats,
                       const TrajectoryDataset& ds, const std::vector<FractionalExample>& batch, double mask_prob,
                       std::uint64_t mask_seed, std::vector<ad::Mat<float>>* grads) {
  std::vector<const Points*> u0, c;
  std::vector<double> t0, tau0;
  for (const auto& ex : batch) {
    if (!(ex.k < ex.mid && ex.mid < ex.n)) throw ArgumentError("fractional example needs k < mid < n");
    u0.push_back(&ds.field(ex.sample, ex.k));
    if (ds.coeff_channels > 0) c.push_back(ds.coeff(ex.sample));
    t0.push_back(ds.times[static_cast<std::size_t>(ex.k)]);
    tau0.push_back(ds.times[static_cast<std::size_t>(ex.mid)] - t0.back());
  }
  // GradCut: the first hop is evaluated outside the differentiated graph.
  const std::vector<Points> mid = step_batch<float>(model, graph, stats, u0, c, t0, tau0);
  std::vector<const Points*> u1, next;
  std::vector<double> t1, tau1;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    u1.push_back(&mid[i]);
    next.push_back(&ds.field(batch[i].sample, batch[i].n));
    t1.push_back(ds.times[static_cast<std::size_t>(batch[i].mid)]);
    tau1.push_back(ds.times[static_cast<std::size_t>(batch[i].n)] - t1.back());
  }
  return transition_loss(model, graph, stats, u1, c, t1, tau1, next, mask_prob, mask_seed, grads);
}

FinetuneResult fractional_finetune(const TrainedModel& start, const TrajectoryDataset& data,
                                   const TrajectoryDataset* val, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  check_dataset(data, cfg, "finetune");
  set_threads_for(cfg);

  // Pairs among training snapshots that admit an intermediate time.
  std::vector<std::pair<Index, Index>> usable;
  for (const auto& [k, n] : cfg.pairs()) {
    if (!admissible_midpoints(k, n, cfg.stride).empty()) usable.emplace_back(k, n);
  }
  FinetuneResult res;
  res.model = start;
  if (usable.empty()) return res;

  Model<float> model = start.instantiate();
  AdamW<float> opt(cfg.adamw);
  const int epochs = cfg.finetune_epochs();
  const Index M = data.num_samples;
  const Index batches = (M + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(epochs) * static_cast<double>(batches);
  const double lr0 = cfg.lr.lr_base, lr1 = cfg.lr.lr_final;
  long step = 0;

  std::optional<RegionalGraph> val_graph;
  if (val) {
    Rng vr = derive_rng(cfg.seed, kValStream);
    val_graph = build_graph(val->cloud, start.graph, vr);
  }

  for (int e = 0; e < epochs; ++e) {
    Rng grng = derive_rng(cfg.seed, kFineStream + kGraphStream + static_cast<std::uint64_t>(e));
    const auto gt = GraphTensors<float>::from_graph(build_graph(data.cloud, start.graph, grng));
    Rng erng = derive_rng(cfg.seed, kFineStream + kEpochStream + static_cast<std::uint64_t>(e));
    std::vector<FractionalExample> examples;
    for (Index m = 0; m < M; ++m) {
      const auto& [k, n] = usable[uniform_index(erng, usable.size())];
      const auto mids = admissible_midpoints(k, n, cfg.stride);
      examples.push_back({m, k, mids[uniform_index(erng, mids.size())], n});
    }
    shuffle(examples, erng);

    LogRow row;
    row.epoch = e;
    double loss_sum = 0.0;
    std::vector<ad::Mat<float>> grads;
    for (Index b = 0; b < batches; ++b) {
      const std::vector<FractionalExample> batch(examples.begin() + b * cfg.batch_size,
                                                 examples.begin() + std::min<Index>(M, (b + 1) * cfg.batch_size));
      const double lr = lr0 * std::pow(lr1 / lr0, static_cast<double>(step) / total_steps);
      const double loss = fractional_loss(model, gt, start.stats, data, batch, start.mask_prob,
                                          batch_seed(cfg.seed, kFineStream + kMaskStream, e, b), &grads);
      if (!std::isfinite(loss) || !all_finite(grads)) nan_abort("finetune", e, b);
      opt.step(model.params(), grads, lr);
      loss_sum += loss;
      row.lr = lr;
      ++step;
    }
    row.loss = loss_sum / static_cast<double>(batches);
    if (val && e + 1 == epochs) {
      row.val = validation_error(model, *val_graph, start.stats, *val, cfg.stride, cfg.last_index);
      if (hooks.on_validation) row.val = hooks.on_validation(e, row.val);
    }
    res.log.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row);
    if (hooks.on_params) hooks.on_params(e, model.params());
  }
  res.model.params = model.params();
  return res;
}

}  // namespace rigno
