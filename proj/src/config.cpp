#include "rigno/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace rigno {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError("bad value for " + key + ": '" + raw + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad value for " + key + ": '" + raw + "' (expected true/false)");
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(bool v) { return v ? "true" : "false"; }
template <typename T>
std::string fmt(T v) requires std::is_integral_v<T> { return std::to_string(v); }

template <typename T>
ConfigKey number_key(std::string name, std::string help, T RunConfig::*field) {
  return {name, std::move(help),
          [name, field](RunConfig& c, const std::string& v) { c.*field = parse_number<T>(name, v); },
          [field](const RunConfig& c) { return fmt(c.*field); }};
}

// Member of a nested struct.
template <typename Outer, typename T>
ConfigKey nested_key(std::string name, std::string help, Outer RunConfig::*outer, T Outer::*field) {
  return {name, std::move(help),
          [name, outer, field](RunConfig& c, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>) {
              (c.*outer).*field = parse_bool(name, v);
            } else {
              (c.*outer).*field = parse_number<T>(name, v);
            }
          },
          [outer, field](const RunConfig& c) { return fmt((c.*outer).*field); }};
}

ConfigKey string_key(std::string name, std::string help, std::string RunConfig::*field) {
  return {name, std::move(help), [field](RunConfig& c, const std::string& v) { c.*field = trim(v); },
          [field](const RunConfig& c) { return c.*field; }};
}

std::vector<ConfigKey> make_keys() {
  using G = GraphConfig;
  using T = TrainConfig;
  std::vector<ConfigKey> k;
  // graph
  k.push_back(nested_key("subsample_factor", "physical-to-regional subsampling factor", &RunConfig::graph, &G::subsample_factor));
  k.push_back(nested_key("overlap_encoder", "encoder support overlap factor", &RunConfig::graph, &G::overlap_encoder));
  k.push_back(nested_key("overlap_decoder", "decoder support overlap factor", &RunConfig::graph, &G::overlap_decoder));
  k.push_back(nested_key("edge_levels", "multi-scale regional edge levels", &RunConfig::graph, &G::edge_levels));
  k.push_back(nested_key("level_subsample", "node subsampling factor between edge levels", &RunConfig::graph, &G::level_subsample));
  k.push_back(nested_key("k_freq", "Fourier frequencies of periodic node features", &RunConfig::graph, &G::k_freq));
  // model
  k.push_back(number_key("latent", "latent width", &RunConfig::latent));
  k.push_back(number_key("hidden", "MLP hidden width", &RunConfig::hidden));
  k.push_back(number_key("cond_hidden", "hidden width of the lead-time conditioning", &RunConfig::cond_hidden));
  k.push_back(number_key("processor_steps", "processor message-passing blocks", &RunConfig::processor_steps));
  // training
  k.push_back(nested_key("epochs", "training epochs", &RunConfig::train, &T::epochs));
  k.push_back(nested_key("batch_size", "training batch size", &RunConfig::train, &T::batch_size));
  k.push_back(nested_key("stride", "snapshot stride of the training data (grid steps)", &RunConfig::train, &T::stride));
  k.push_back(nested_key("last_index", "last training snapshot (grid index)", &RunConfig::train, &T::last_index));
  k.push_back(nested_key("max_lead", "cap on n - k in grid steps, 0 = none", &RunConfig::train, &T::max_lead));
  k.push_back(nested_key("curriculum_fraction", "share of epochs spent growing the admitted leads", &RunConfig::train, &T::curriculum_fraction));
  k.push_back({"kind", "stepping strategy: output | residual | derivative",
               [](RunConfig& c, const std::string& v) {
                 try {
                   c.train.kind = parse_step_kind(trim(v));
                 } catch (const std::exception& e) {
                   throw ConfigError(std::string("bad value for kind: ") + e.what());
                 }
               },
               [](const RunConfig& c) { return to_string(c.train.kind); }});
  k.push_back(nested_key("mask_prob", "edge masking probability during training", &RunConfig::train, &T::mask_prob));
  k.push_back({"lr_start", "learning rate at step 0",
               [](RunConfig& c, const std::string& v) { c.train.lr.lr_start = parse_number<double>("lr_start", v); },
               [](const RunConfig& c) { return fmt(c.train.lr.lr_start); }});
  k.push_back({"lr_peak", "learning rate after warm-up",
               [](RunConfig& c, const std::string& v) { c.train.lr.lr_peak = parse_number<double>("lr_peak", v); },
               [](const RunConfig& c) { return fmt(c.train.lr.lr_peak); }});
  k.push_back({"lr_base", "learning rate at the end of the cosine decay",
               [](RunConfig& c, const std::string& v) { c.train.lr.lr_base = parse_number<double>("lr_base", v); },
               [](const RunConfig& c) { return fmt(c.train.lr.lr_base); }});
  k.push_back({"lr_final", "final learning rate",
               [](RunConfig& c, const std::string& v) { c.train.lr.lr_final = parse_number<double>("lr_final", v); },
               [](const RunConfig& c) { return fmt(c.train.lr.lr_final); }});
  k.push_back({"warmup_end", "training fraction where warm-up ends",
               [](RunConfig& c, const std::string& v) { c.train.lr.warmup_end = parse_number<double>("warmup_end", v); },
               [](const RunConfig& c) { return fmt(c.train.lr.warmup_end); }});
  k.push_back({"cosine_end", "training fraction where cosine decay ends",
               [](RunConfig& c, const std::string& v) { c.train.lr.cosine_end = parse_number<double>("cosine_end", v); },
               [](const RunConfig& c) { return fmt(c.train.lr.cosine_end); }});
  k.push_back({"beta1", "AdamW beta1",
               [](RunConfig& c, const std::string& v) { c.train.adamw.beta1 = parse_number<double>("beta1", v); },
               [](const RunConfig& c) { return fmt(c.train.adamw.beta1); }});
  k.push_back({"beta2", "AdamW beta2",
               [](RunConfig& c, const std::string& v) { c.train.adamw.beta2 = parse_number<double>("beta2", v); },
               [](const RunConfig& c) { return fmt(c.train.adamw.beta2); }});
  k.push_back({"adam_eps", "AdamW epsilon",
               [](RunConfig& c, const std::string& v) { c.train.adamw.eps = parse_number<double>("adam_eps", v); },
               [](const RunConfig& c) { return fmt(c.train.adamw.eps); }});
  k.push_back({"weight_decay", "AdamW decoupled weight decay",
               [](RunConfig& c, const std::string& v) {
                 c.train.adamw.weight_decay = parse_number<double>("weight_decay", v);
               },
               [](const RunConfig& c) { return fmt(c.train.adamw.weight_decay); }});
  k.push_back(nested_key("val_every", "validation cadence in epochs", &RunConfig::train, &T::val_every));
  k.push_back(nested_key("deterministic", "fixed reduction order and one math thread", &RunConfig::train, &T::deterministic));
  k.push_back(nested_key("finetune_fraction", "fine-tuning epochs as a share of epochs", &RunConfig::train, &T::finetune_fraction));
  k.push_back(nested_key("gradcut", "stop gradients through the first hop (only true is supported)", &RunConfig::train, &T::gradcut));
  // paths
  k.push_back(string_key("data", "dataset file (RGND)", &RunConfig::data));
  k.push_back(string_key("val", "validation dataset file (RGND)", &RunConfig::val));
  k.push_back(string_key("checkpoint", "trained model file (RGNC)", &RunConfig::checkpoint));
  k.push_back(string_key("out", "output file", &RunConfig::out));
  k.push_back(string_key("report_dir", "directory for reports and the effective config", &RunConfig::report_dir));
  // generation
  k.push_back(string_key("pde", "generator: heat-dirichlet | heat-periodic", &RunConfig::pde));
  k.push_back(number_key("samples", "trajectories to generate", &RunConfig::samples));
  k.push_back(number_key("points", "points per cloud", &RunConfig::points));
  k.push_back(number_key("snapshots", "snapshots per trajectory", &RunConfig::snapshots));
  k.push_back(number_key("t_final", "final time", &RunConfig::t_final));
  k.push_back(number_key("modes", "modes (Dirichlet) or max frequency (periodic)", &RunConfig::modes));
  k.push_back(number_key("diffusivity", "diffusivity a", &RunConfig::diffusivity));
  // inference
  k.push_back(string_key("schemes", "rollout schemes: ar<k>, dr, custom:a,b,... separated by ';' or ','", &RunConfig::schemes));
  k.push_back(number_key("start_index", "snapshot the rollout starts from", &RunConfig::start_index));
  k.push_back(number_key("target_index", "snapshot the rollout reaches (-1: last)", &RunConfig::target_index));
  k.push_back(number_key("eval_batch", "batch size at inference", &RunConfig::eval_batch));
  k.push_back(number_key("members", "ensemble members", &RunConfig::members));
  k.push_back(number_key("inference_mask_prob", "edge masking probability of ensemble members", &RunConfig::inference_mask_prob));
  k.push_back(string_key("sample_list", "comma-separated sample indices (empty: all)", &RunConfig::sample_list));
  k.push_back(number_key("seed", "random seed", &RunConfig::seed));
  k.push_back(number_key("threads", "worker threads (1 = bit-reproducible)", &RunConfig::threads));
  return k;
}

const ConfigKey& find_key(const std::string& key) {
  for (const auto& k : config_keys()) {
    if (k.name == key) return k;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = make_keys();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return find_key(key).get(cfg); }

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  apply_config_text(cfg, ss.str(), path);
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::vector<Index> parse_index_list(const std::string& s) {
  std::vector<Index> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number<Index>("index list", item));
  }
  return out;
}

ModelConfig RunConfig::model_config(const Domain& domain, Index channels, Index coeff_channels) const {
  ModelConfig m = ModelConfig::for_domain(domain, graph.k_freq, static_cast<int>(channels), static_cast<int>(coeff_channels));
  m.latent = latent;
  m.hidden = hidden;
  m.cond_hidden = cond_hidden;
  m.processor_steps = processor_steps;
  return m;
}

void RunConfig::validate() const {
  graph.validate();
  train.validate();
  if (latent < 1 || hidden < 1 || cond_hidden < 1 || processor_steps < 0) throw ConfigError("model widths must be positive");
  if (pde != "heat-dirichlet" && pde != "heat-periodic") throw ConfigError("pde must be heat-dirichlet or heat-periodic");
  if (samples < 1 || points < 3 || snapshots < 2) throw ConfigError("samples >= 1, points >= 3, snapshots >= 2 required");
  if (!(t_final > 0.0)) throw ConfigError("t_final must be positive");
  if (modes < 1) throw ConfigError("modes must be >= 1");
  if (start_index < 0) throw ConfigError("start_index must be >= 0");
  if (eval_batch < 1) throw ConfigError("eval_batch must be >= 1");
  if (members < 2) throw ConfigError("members must be >= 2");
  if (!(inference_mask_prob >= 0.0 && inference_mask_prob < 1.0)) throw ConfigError("inference_mask_prob must lie in [0, 1)");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

}  // namespace rigno
