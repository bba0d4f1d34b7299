#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rigno/graphs.hpp"
#include "rigno/model.hpp"
#include "rigno/stepping.hpp"

namespace rigno {

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;
};

/// Ordered list of named float tensors ("RGNC" file).
struct TensorFile {
  std::vector<NamedTensor> tensors;

  void add(std::string name, std::vector<std::uint32_t> shape, std::vector<float> values);
  void add_scalar(const std::string& name, double v) { add(name, {}, {static_cast<float>(v)}); }
  const NamedTensor* find(const std::string& name) const;
  const NamedTensor& get(const std::string& name) const;
  double scalar(const std::string& name) const;
};

std::vector<unsigned char> encode_tensors(const TensorFile& f);
TensorFile decode_tensors(std::vector<unsigned char> bytes);
void write_tensors(const std::string& path, const TensorFile& f);
TensorFile read_tensors(const std::string& path);

/// Everything needed to run a trained model on new data.
struct TrainedModel {
  ModelConfig model;
  GraphConfig graph;
  NormStats stats;
  ParamSet<float> params;
  Index regional_count = 0;  // R at training resolution
  double mask_prob = 0.5;
  std::vector<bool> periodic;

  Model<float> instantiate() const { return Model<float>(model, params); }
};

/// Statistics at storage precision, so a reloaded model predicts identically.
NormStats quantize(const NormStats& s);

TensorFile to_tensors(const TrainedModel& m);
TrainedModel from_tensors(const TensorFile& f);
void save_model(const std::string& path, const TrainedModel& m);
TrainedModel load_model(const std::string& path);

}  // namespace rigno
