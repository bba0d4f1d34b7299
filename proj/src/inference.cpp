#include "rigno/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace rigno {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

}  // namespace

Index RolloutScheme::total() const { return std::accumulate(leads.begin(), leads.end(), Index{0}); }

void RolloutScheme::validate() const {
  if (leads.empty()) throw ArgumentError("rollout scheme '" + name + "' has no steps");
  for (Index l : leads) {
    if (l <= 0) throw ArgumentError("rollout scheme '" + name + "': lead times must be positive");
  }
}

RolloutScheme RolloutScheme::autoregressive(Index stride, Index target) {
  if (stride < 1 || target < 1) throw ArgumentError("autoregressive scheme: stride and target must be positive");
  RolloutScheme s;
  s.name = "ar" + std::to_string(stride);
  for (Index done = 0; done < target; done += stride) s.leads.push_back(std::min(stride, target - done));
  return s;
}

RolloutScheme RolloutScheme::direct(Index target) {
  if (target < 1) throw ArgumentError("direct scheme: target must be positive");
  return {"dr", {target}};
}

RolloutScheme RolloutScheme::custom(std::vector<Index> leads) {
  RolloutScheme s{"custom", std::move(leads)};
  s.validate();
  return s;
}

RolloutScheme RolloutScheme::parse(const std::string& spec, Index target) {
  if (spec == "dr") return direct(target);
  if (spec.size() > 2 && spec.rfind("ar", 0) == 0) {
    const std::string k = spec.substr(2);
    if (k.find_first_not_of("0123456789") == std::string::npos) return autoregressive(std::stol(k), target);
  }
  if (spec.rfind("custom:", 0) == 0) {
    std::vector<Index> leads;
    std::stringstream ss(spec.substr(7));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
        throw ArgumentError("bad lead '" + item + "' in scheme '" + spec + "'");
      }
      leads.push_back(std::stol(item));
    }
    return custom(std::move(leads));
  }
  throw ArgumentError("unknown rollout scheme '" + spec + "' (ar<k>, dr, custom:a,b,...)");
}

std::vector<RolloutScheme> parse_scheme_list(const std::string& list, Index target) {
  std::vector<std::string> specs;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    const bool number = !item.empty() && item.find_first_not_of("0123456789") == std::string::npos;
    if (number && !specs.empty() && specs.back().rfind("custom:", 0) == 0) {
      specs.back() += "," + item;
    } else {
      specs.push_back(item);
    }
  }
  std::vector<RolloutScheme> out;
  for (const auto& s : specs) out.push_back(RolloutScheme::parse(s, target));
  if (out.empty()) throw ArgumentError("empty scheme list");
  return out;
}

std::vector<RolloutScheme> standard_schemes(Index target) {
  return {RolloutScheme::autoregressive(2, target), RolloutScheme::autoregressive(4, target),
          RolloutScheme::direct(target)};
}

Predictor::Predictor(const TrainedModel& m, const RegionalGraph& g, Index batch)
    : model(m.instantiate()), graph(GraphTensors<float>::from_graph(g)), stats(m.stats), batch_size(batch) {}

Predictor::Predictor(Model<float> mdl, const RegionalGraph& g, NormStats st, Index batch)
    : model(std::move(mdl)), graph(GraphTensors<float>::from_graph(g)), stats(std::move(st)), batch_size(batch) {}

RegionalGraph evaluation_graph(const TrainedModel& m, const PointCloud& cloud, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 0x6576616cULL);
  const auto natural = static_cast<Index>(std::floor(static_cast<double>(cloud.size()) / m.graph.subsample_factor));
  if (m.regional_count <= 0 || natural == m.regional_count) return build_graph(cloud, m.graph, rng);
  return build_graph_with_regional_count(cloud, m.regional_count, m.graph, rng);
}

std::vector<std::vector<Points>> rollout(const Predictor& p, const TrajectoryDataset& ds,
                                         const std::vector<Index>& samples, Index start_index,
                                         const RolloutScheme& scheme, const MaskSettings* mask,
                                         const std::vector<Points>* start) {
  scheme.validate();
  if (start_index < 0 || start_index + scheme.total() >= ds.num_times()) {
    throw ArgumentError("rollout: scheme '" + scheme.name + "' runs past the last snapshot");
  }
  if (start && start->size() != samples.size()) throw ArgumentError("rollout: one start field per sample");
  if (ds.num_points() != p.graph.num_physical) throw ArgumentError("rollout: dataset and graph sizes differ");
  const Index B = std::max<Index>(1, p.batch_size);
  std::vector<std::vector<Points>> out(samples.size());
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += static_cast<std::size_t>(B)) {
    const std::size_t b1 = std::min(samples.size(), b0 + static_cast<std::size_t>(B));
    std::vector<Points> cur;
    std::vector<const Points*> c;
    for (std::size_t i = b0; i < b1; ++i) {
      cur.push_back(start ? (*start)[i] : ds.field(samples[i], start_index));
      c.push_back(ds.coeff(samples[i]));
    }
    Index idx = start_index;
    for (std::size_t j = 0; j < scheme.leads.size(); ++j) {
      const Index next = idx + scheme.leads[j];
      const double t = ds.times[static_cast<std::size_t>(idx)];
      const double tau = ds.times[static_cast<std::size_t>(next)] - t;
      const auto n = static_cast<Index>(cur.size());
      std::vector<const Points*> u;
      for (const auto& f : cur) u.push_back(&f);
      MaskPlan plan;
      const MaskPlan* plan_ptr = nullptr;
      if (mask && mask->prob > 0.0) {
        plan = MaskPlan::sample(mask->prob, mix(mask->seed, b0, j), static_cast<Index>(p.graph.p2r_send.size()),
                                static_cast<Index>(p.graph.r2r_send.size()), static_cast<Index>(p.graph.r2p_send.size()), p.model.config().processor_steps, n);
        plan_ptr = &plan;
      }
      cur = step_batch<float>(p.model, p.graph, p.stats, u, c, std::vector<double>(n, t), std::vector<double>(n, tau),
                              plan_ptr);
      for (std::size_t i = 0; i < cur.size(); ++i) out[b0 + i].push_back(cur[i]);
      idx = next;
    }
  }
  return out;
}

std::vector<EnsembleResult> ensemble_rollout(const Predictor& p, const TrajectoryDataset& ds,
                                             const std::vector<Index>& samples, Index start_index,
                                             const RolloutScheme& scheme, Index members, double mask_prob,
                                             std::uint64_t seed) {
  if (members < 2) throw ArgumentError("ensemble: need at least two members");
  // Moments of the deviation from the first member: identical members give a
  // zero std exactly, and the shift keeps the one-pass variance well conditioned.
  std::vector<Points> first(samples.size()), sum(samples.size()), sum_sq(samples.size());
  for (Index r = 0; r < members; ++r) {
    const MaskSettings ms{mask_prob, mix(seed, 0x656e73ULL, static_cast<std::uint64_t>(r))};
    const auto traj = rollout(p, ds, samples, start_index, scheme, &ms);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Points& f = traj[i].back();
      if (r == 0) {
        first[i] = f;
        sum[i] = Points::Zero(f.rows(), f.cols());
        sum_sq[i] = Points::Zero(f.rows(), f.cols());
        continue;
      }
      const Points d = f - first[i];
      sum[i] += d;
      sum_sq[i] += d.cwiseProduct(d);
    }
  }
  std::vector<EnsembleResult> out(samples.size());
  const double k = static_cast<double>(members);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i].members = members;
    const Points dm = sum[i] / k;
    out[i].mean = first[i] + dm;
    // Sample std with the K - 1 denominator; clamp tiny negative round-off.
    const Points var = ((sum_sq[i] - k * dm.cwiseProduct(dm)) / (k - 1.0)).cwiseMax(0.0);
    out[i].std = var.cwiseSqrt();
  }
  return out;
}

double relative_l1(const Points& pred, const Points& truth, const Eigen::RowVectorXd& global_mean,
                   const Eigen::RowVectorXd& global_std, const std::vector<std::vector<Index>>& groups) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw ArgumentError("relative_l1: shape mismatch");
  if (global_mean.size() != pred.cols() || global_std.size() != pred.cols()) {
    throw ArgumentError("relative_l1: statistics do not match the channel count");
  }
  std::vector<std::vector<Index>> g = groups;
  if (g.empty()) {
    for (Index c = 0; c < pred.cols(); ++c) g.push_back({c});
  }
  double total = 0.0;
  for (const auto& grp : g) {
    double num = 0.0, den = 0.0;
    for (Index c : grp) {
      if (c < 0 || c >= pred.cols()) throw ArgumentError("relative_l1: channel group index out of range");
      for (Index i = 0; i < pred.rows(); ++i) {
        const double a = (pred(i, c) - global_mean[c]) / global_std[c];
        const double b = (truth(i, c) - global_mean[c]) / global_std[c];
        num += std::abs(a - b);
        den += std::abs(b);
      }
    }
    total += den > 0.0 ? num / den : (num > 0.0 ? 1.0 : 0.0);
  }
  return total / static_cast<double>(g.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = rank;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ArgumentError("spearman: need two equal-length samples");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> scheme_errors(const Predictor& p, const TrajectoryDataset& ds, const RolloutScheme& scheme,
                                  Index start_index) {
  std::vector<Index> samples(static_cast<std::size_t>(ds.num_samples));
  std::iota(samples.begin(), samples.end(), Index{0});
  const auto traj = rollout(p, ds, samples, start_index, scheme);
  const Index target = start_index + scheme.total();
  std::vector<double> err;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    err.push_back(relative_l1(traj[i].back(), ds.field(samples[i], target), p.stats.global_mean, p.stats.global_std));
  }
  return err;
}

EvaluationReport evaluate(const Predictor& p, const TrajectoryDataset& ds, const std::vector<RolloutScheme>& schemes,
                          Index start_index) {
  EvaluationReport rep;
  rep.best_median = std::numeric_limits<double>::infinity();
  for (const auto& s : schemes) {
    SchemeReport r;
    r.scheme = s.name;
    r.errors = scheme_errors(p, ds, s, start_index);
    r.median = median(r.errors);
    if (s.name == "ar2" || s.name == "ar4" || s.name == "dr") rep.best_median = std::min(rep.best_median, r.median);
    rep.schemes.push_back(std::move(r));
  }
  if (!std::isfinite(rep.best_median) && !rep.schemes.empty()) {
    for (const auto& r : rep.schemes) rep.best_median = std::min(rep.best_median, r.median);
  }
  return rep;
}

std::vector<NoiseResult> noise_eval(const Predictor& p, const TrajectoryDataset& ds, const std::vector<double>& levels,
                                    const RolloutScheme& scheme, std::uint64_t seed) {
  std::vector<Index> samples(static_cast<std::size_t>(ds.num_samples));
  std::iota(samples.begin(), samples.end(), Index{0});
  const Index target = scheme.total();
  const auto clean = rollout(p, ds, samples, 0, scheme);
  std::vector<double> e_clean;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    e_clean.push_back(relative_l1(clean[i].back(), ds.field(samples[i], target), p.stats.global_mean,
                                  p.stats.global_std));
  }
  std::vector<NoiseResult> out;
  for (double c : levels) {
    NoiseResult res;
    res.c = c;
    std::vector<Points> start;
    for (Index m : samples) {
      const Points& u0 = ds.field(m, 0);
      const double mean = u0.mean();
      const double sigma = std::sqrt((u0.array() - mean).square().mean());
      Rng rng = derive_rng(seed, static_cast<std::uint64_t>(m));
      Points noisy = u0;
      for (Index k = 0; k < noisy.size(); ++k) noisy.data()[k] += c * sigma * standard_normal(rng);
      start.push_back(std::move(noisy));
    }
    const auto traj = c == 0.0 ? clean : rollout(p, ds, samples, 0, scheme, nullptr, &start);
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double e = relative_l1(traj[i].back(), ds.field(samples[i], target), p.stats.global_mean,
                                   p.stats.global_std);
      const double induced = e_clean[i] > 0.0 ? std::abs(e - e_clean[i]) / e_clean[i] : 0.0;
      res.per_sample.push_back(induced);
      total += induced;
    }
    res.induced = samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
    out.push_back(std::move(res));
  }
  return out;
}

std::vector<ResolutionRow> evaluate_resolution(const TrainedModel& m, const std::vector<TrajectoryDataset>& datasets,
                                               const std::vector<RolloutScheme>& schemes, std::uint64_t seed) {
  std::vector<ResolutionRow> rows;
  for (const auto& ds : datasets) {
    const RegionalGraph g = evaluation_graph(m, ds.cloud, seed);
    const Predictor p(m, g);
    ResolutionRow r;
    r.points = ds.num_points();
    r.regional = g.num_regional();
    r.median = evaluate(p, ds, schemes).best_median;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace rigno
