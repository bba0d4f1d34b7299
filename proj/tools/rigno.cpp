// rigno command-line entry point.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <CLI11.hpp>
#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rigno/config.hpp"
#include "rigno/inference.hpp"
#include "rigno/training.hpp"

using namespace rigno;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One flag per config key; values are applied after the config file.
struct Flags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void add_key_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_path, "flat `key = value` config file (CLI flags take precedence)");
  for (const auto& k : config_keys()) {
    std::string names = "--" + k.name;
    const std::string dashed = [&] {
      std::string d = k.name;
      std::replace(d.begin(), d.end(), '_', '-');
      return d;
    }();
    if (dashed != k.name) names += ",--" + dashed;
    if (k.name == "schemes") names += ",--scheme";
    f.options[k.name] = sub->add_option(names, f.values[k.name], k.help + " [default: " + k.get(RunConfig{}) + "]");
  }
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (const char* env = std::getenv("RIGNO_THREADS")) {
    try {
      set_config_value(cfg, "threads", env);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("RIGNO_THREADS: ") + e.what());
    }
  }
  try {
    if (!f.config_path.empty()) apply_config_file(cfg, f.config_path);
    for (const auto& [key, opt] : f.options) {
      if (opt->count() > 0) set_config_value(cfg, key, f.values.at(key));
    }
    cfg.train.seed = cfg.seed;
    cfg.graph.rng_seed = cfg.seed;
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

void require(const std::string& value, const char* key) {
  if (value.empty()) throw UsageError(std::string("missing required setting --") + key);
}

void set_threads(const RunConfig& cfg) {
  Eigen::setNbThreads(cfg.threads);
#ifdef _OPENMP
  omp_set_num_threads(cfg.threads);
#endif
}

std::filesystem::path report_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.report_dir.empty() ? "." : cfg.report_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void echo_config(const RunConfig& cfg, const std::string& command) {
  std::ofstream out(report_dir(cfg) / (command + "_config.txt"));
  out << "# effective configuration of `rigno " << command << "`\n" << dump_config(cfg);
}

std::vector<RolloutScheme> schemes_for(const RunConfig& cfg, const TrajectoryDataset& ds, Index* target_out) {
  const Index target = cfg.target_index < 0 ? ds.num_times() - 1 : cfg.target_index;
  if (target <= cfg.start_index || target >= ds.num_times()) throw UsageError("target_index out of range");
  *target_out = target;
  try {
    return parse_scheme_list(cfg.schemes, target - cfg.start_index);
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
}

std::vector<Index> samples_for(const RunConfig& cfg, const TrajectoryDataset& ds) {
  std::vector<Index> s;
  try {
    s = parse_index_list(cfg.sample_list);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (s.empty()) {
    s.resize(static_cast<std::size_t>(ds.num_samples));
    std::iota(s.begin(), s.end(), Index{0});
  }
  for (Index m : s) {
    if (m < 0 || m >= ds.num_samples) throw UsageError("sample index out of range: " + std::to_string(m));
  }
  return s;
}

// ---- subcommands ------------------------------------------------------------

int cmd_generate(const RunConfig& cfg) {
  require(cfg.out, "out");
  Rng rng = derive_rng(cfg.seed, 0x67656e);
  const TrajectoryDataset ds =
      cfg.pde == "heat-dirichlet"
          ? gen_heat_dirichlet(cfg.samples, cfg.points, cfg.t_final, cfg.modes, cfg.diffusivity, rng, cfg.snapshots)
          : gen_heat_periodic(cfg.samples, cfg.points, cfg.t_final, cfg.modes, cfg.diffusivity, rng, cfg.snapshots);
  write_dataset(cfg.out, ds);
  std::cout << "wrote " << cfg.out << ": M=" << ds.num_samples << " N_t=" << ds.num_times()
            << " N=" << ds.num_points() << "\n";
  return 0;
}

int cmd_build_graph(const RunConfig& cfg, const std::string& geometry_prefix) {
  require(cfg.data, "data");
  const TrajectoryDataset ds = read_dataset(cfg.data);
  Rng rng = derive_rng(cfg.seed, 0x67726166);
  const RegionalGraph g = build_graph(ds.cloud, cfg.graph, rng);
  std::cout << "physical " << g.num_physical() << ", regional " << g.num_regional() << ", edges p2r "
            << g.p2r.size() << " r2r " << g.r2r.size() << " r2p " << g.r2p.size() << ", levels "
            << g.levels_built << "\n";
  if (!cfg.out.empty()) {
    std::ofstream out(cfg.out);
    out << "sender,receiver,set";
    for (Index c = 0; c < g.p2r.features.cols(); ++c) out << ",f" << c;
    out << "\n" << std::setprecision(17);
    auto dump = [&](const DirectedEdgeSet& e, const char* tag) {
      for (Index i = 0; i < e.size(); ++i) {
        out << e.senders[i] << ',' << e.receivers[i] << ',' << tag;
        for (Index c = 0; c < e.features.cols(); ++c) out << ',' << e.features(i, c);
        out << '\n';
      }
    };
    dump(g.p2r, "p2r");
    dump(g.r2r, "r2r");
    dump(g.r2p, "r2p");
  }
  if (!geometry_prefix.empty()) {
    const Triangulation tri = delaunay(g.regional);
    std::ofstream s(geometry_prefix + "_simplices.csv");
    s << "v0,v1,v2\n";
    for (const auto& t : tri.simplices) s << t[0] << ',' << t[1] << ',' << t[2] << '\n';
    std::ofstream r(geometry_prefix + "_radii.csv");
    r << "index,radius_encoder,radius_decoder\n" << std::setprecision(17);
    for (Index i = 0; i < g.num_regional(); ++i) r << i << ',' << g.radii_encoder[i] << ',' << g.radii_decoder[i] << '\n';
  }
  return 0;
}

void print_log_row(const LogRow& r) {
  std::printf("epoch %d lr %.3e loss %.6g", r.epoch, r.lr, r.loss);
  if (!std::isnan(r.val)) std::printf(" val %.6g", r.val);
  std::printf("\n");
  std::fflush(stdout);
}

int cmd_train(const RunConfig& cfg) {
  require(cfg.data, "data");
  require(cfg.out, "out");
  const TrajectoryDataset data = read_dataset(cfg.data);
  std::optional<TrajectoryDataset> val;
  if (!cfg.val.empty()) val = read_dataset(cfg.val);
  const ModelConfig mc = cfg.model_config(data.cloud.domain, data.channels, data.coeff_channels);
  TrainHooks hooks;
  hooks.on_epoch = print_log_row;
  const TrainResult res = train(data, val ? &*val : nullptr, mc, cfg.graph, cfg.train, hooks);
  save_model(cfg.out, res.model);
  write_log_csv((report_dir(cfg) / "train_log.csv").string(), res.log);
  std::cout << "wrote " << cfg.out << " (" << res.model.params.count() << " parameters";
  if (res.best_epoch >= 0) std::cout << ", best validation " << res.best_val << " at epoch " << res.best_epoch;
  std::cout << ")\n";
  return 0;
}

int cmd_finetune(const RunConfig& cfg) {
  require(cfg.checkpoint, "checkpoint");
  require(cfg.data, "data");
  require(cfg.out, "out");
  const TrainedModel start = load_model(cfg.checkpoint);
  const TrajectoryDataset data = read_dataset(cfg.data);
  std::optional<TrajectoryDataset> val;
  if (!cfg.val.empty()) val = read_dataset(cfg.val);
  TrainHooks hooks;
  hooks.on_epoch = print_log_row;
  const FinetuneResult res = fractional_finetune(start, data, val ? &*val : nullptr, cfg.train, hooks);
  save_model(cfg.out, res.model);
  write_log_csv((report_dir(cfg) / "finetune_log.csv").string(), res.log);
  std::cout << "wrote " << cfg.out << "\n";
  return 0;
}

struct Loaded {
  TrainedModel model;
  TrajectoryDataset data;
};

Loaded load_inputs(const RunConfig& cfg) {
  require(cfg.checkpoint, "checkpoint");
  require(cfg.data, "data");
  Loaded l{load_model(cfg.checkpoint), read_dataset(cfg.data)};
  if (l.data.channels != l.model.model.field_channels) throw ArgumentError("dataset channels do not match the model");
  return l;
}

RolloutScheme single_scheme(const RunConfig& cfg, const TrajectoryDataset& ds) {
  Index target = 0;
  auto list = schemes_for(cfg, ds, &target);
  if (list.size() != 1) throw UsageError("this command takes exactly one scheme");
  return list.front();
}

int cmd_rollout(const RunConfig& cfg) {
  require(cfg.out, "out");
  const Loaded in = load_inputs(cfg);
  const RolloutScheme scheme = single_scheme(cfg, in.data);
  const auto samples = samples_for(cfg, in.data);
  const Predictor p(in.model, evaluation_graph(in.model, in.data.cloud, cfg.seed), cfg.eval_batch);
  const auto traj = rollout(p, in.data, samples, cfg.start_index, scheme);
  // Input snapshot followed by every predicted one.
  std::vector<Index> idx{cfg.start_index};
  for (Index l : scheme.leads) idx.push_back(idx.back() + l);
  TrajectoryDataset out = in.data.select_samples(samples).select_times(idx);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = 0; j < traj[i].size(); ++j) out.field(static_cast<Index>(i), static_cast<Index>(j + 1)) = traj[i][j];
  }
  write_dataset(cfg.out, out);
  std::cout << "wrote " << cfg.out << ": " << samples.size() << " samples, " << idx.size() << " snapshots\n";
  return 0;
}

int cmd_ensemble(const RunConfig& cfg) {
  require(cfg.out, "out");
  const Loaded in = load_inputs(cfg);
  const RolloutScheme scheme = single_scheme(cfg, in.data);
  const auto samples = samples_for(cfg, in.data);
  const Predictor p(in.model, evaluation_graph(in.model, in.data.cloud, cfg.seed), cfg.eval_batch);
  const auto res = ensemble_rollout(p, in.data, samples, cfg.start_index, scheme, cfg.members,
                                    cfg.inference_mask_prob, cfg.seed);
  // One snapshot at the final time; channels are [mean..., std...].
  const Index s = in.data.channels;
  TrajectoryDataset out = in.data.select_samples(samples).select_times({cfg.start_index + scheme.total()});
  out.channels = 2 * s;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Points f(in.data.num_points(), 2 * s);
    f.leftCols(s) = res[i].mean;
    f.rightCols(s) = res[i].std;
    out.field(static_cast<Index>(i), 0) = f;
  }
  write_dataset(cfg.out, out);
  std::cout << "wrote " << cfg.out << ": " << samples.size() << " samples, K=" << cfg.members << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  const Loaded in = load_inputs(cfg);
  Index target = 0;
  const auto schemes = schemes_for(cfg, in.data, &target);
  const auto samples = samples_for(cfg, in.data);
  const TrajectoryDataset ds = in.data.select_samples(samples);
  const Predictor p(in.model, evaluation_graph(in.model, ds.cloud, cfg.seed), cfg.eval_batch);
  const EvaluationReport rep = evaluate(p, ds, schemes, cfg.start_index);
  const auto path = report_dir(cfg) / "evaluation.csv";
  std::ofstream out(path);
  out << "sample,scheme,time_index,error\n" << std::setprecision(9);
  for (std::size_t k = 0; k < rep.schemes.size(); ++k) {
    const auto& s = rep.schemes[k];
    const Index end = cfg.start_index + schemes[k].total();
    for (std::size_t i = 0; i < s.errors.size(); ++i) {
      out << samples[i] << ',' << s.scheme << ',' << end << ',' << s.errors[i] << '\n';
    }
  }
  for (const auto& s : rep.schemes) std::printf("%-12s median relative L1 %.6g\n", s.scheme.c_str(), s.median);
  std::printf("%-12s %.6g\n", "min", rep.best_median);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_describe(const RunConfig& cfg) {
  ModelConfig mc;
  if (!cfg.checkpoint.empty()) {
    mc = load_model(cfg.checkpoint).model;
  } else {
    Domain d = Domain::unit_square(cfg.pde == "heat-periodic", cfg.pde == "heat-periodic");
    mc = cfg.model_config(d, 1, 0);
  }
  const Model<float> m(mc, 0);
  for (const auto& [block, n] : m.describe()) std::printf("%-24s %ld\n", block.c_str(), static_cast<long>(n));
  std::printf("%-24s %ld\n", "total", static_cast<long>(m.parameter_count()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rigno: multi-scale graph neural operator on point clouds"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"generate", "write a synthetic heat-equation dataset"},
      {"build-graph", "build the regional graph of a dataset's cloud"},
      {"train", "train a model on a dataset"},
      {"finetune", "fractional-pairing fine-tuning of a trained model"},
      {"rollout", "predict trajectories with one rollout scheme"},
      {"ensemble", "masked-inference ensemble mean and std"},
      {"evaluate", "relative L1 errors per rollout scheme"},
      {"describe", "per-block parameter counts"},
  };
  std::map<std::string, Flags> flags;
  std::map<std::string, CLI::App*> subs;
  std::string geometry_prefix;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_key_flags(sub, flags[name]);
    if (name == "build-graph") {
      sub->add_option("--dump-geometry", geometry_prefix,
                      "write <prefix>_simplices.csv and <prefix>_radii.csv for the regional nodes");
    }
    subs[name] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::string name;
  for (const auto& [n, sub] : subs) {
    if (sub->parsed()) name = n;
  }
  try {
    const RunConfig cfg = resolve(flags[name]);
    set_threads(cfg);
    if (name != "describe") echo_config(cfg, name);
    if (name == "generate") return cmd_generate(cfg);
    if (name == "build-graph") return cmd_build_graph(cfg, geometry_prefix);
    if (name == "train") return cmd_train(cfg);
    if (name == "finetune") return cmd_finetune(cfg);
    if (name == "rollout") return cmd_rollout(cfg);
    if (name == "ensemble") return cmd_ensemble(cfg);
    if (name == "evaluate") return cmd_evaluate(cfg);
    if (name == "describe") return cmd_describe(cfg);
  } catch (const UsageError& e) {
    std::cerr << "rigno " << name << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "rigno " << name << ": error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
