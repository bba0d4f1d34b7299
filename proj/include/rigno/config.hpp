#pragma once

// Flat `key = value` run configuration shared by the config file and the
// command line (one flag per key).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rigno/graphs.hpp"
#include "rigno/training.hpp"

namespace rigno {

struct RunConfig {
  GraphConfig graph;
  TrainConfig train;

  // model
  int latent = 128;
  int hidden = 128;
  int cond_hidden = 16;
  int processor_steps = 18;

  // paths
  std::string data;
  std::string val;
  std::string checkpoint;  // input model
  std::string out;         // output artifact
  std::string report_dir = ".";

  // generation
  std::string pde = "heat-dirichlet";
  Index samples = 64;
  Index points = 1024;
  Index snapshots = 21;
  double t_final = 0.005;
  int modes = 10;
  double diffusivity = 1.0;

  // inference
  std::string schemes = "ar2,ar4,dr";
  Index start_index = 0;
  Index target_index = -1;  // < 0: last snapshot of the dataset
  Index eval_batch = 16;
  Index members = 20;
  double inference_mask_prob = 0.5;
  std::string sample_list;  // comma-separated sample indices, empty: all

  std::uint64_t seed = 0;
  int threads = 1;

  ModelConfig model_config(const Domain& domain, Index channels, Index coeff_channels) const;
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

/// Every accepted key, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Unknown key or unparsable value -> ConfigError.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// Applies `key = value` lines; '#' starts a comment, blank lines are ignored.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<config>");
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Effective configuration as `key = value` lines, one per key.
std::string dump_config(const RunConfig& cfg);

std::vector<Index> parse_index_list(const std::string& s);

}  // namespace rigno
