#include "rigno/checkpoint.hpp"

#include "rigno/binio.hpp"

namespace rigno {

namespace {

constexpr char kMagic[4] = {'R', 'G', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

double q32(double v) { return static_cast<double>(static_cast<float>(v)); }

Eigen::RowVectorXd q32(const Eigen::RowVectorXd& v) { return v.cast<float>().cast<double>(); }

std::vector<float> to_floats(const Eigen::RowVectorXd& v) {
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

Eigen::RowVectorXd row_of(const NamedTensor& t) {
  Eigen::RowVectorXd v(static_cast<Index>(t.values.size()));
  for (std::size_t i = 0; i < t.values.size(); ++i) v[static_cast<Index>(i)] = t.values[i];
  return v;
}

}  // namespace

void TensorFile::add(std::string name, std::vector<std::uint32_t> shape, std::vector<float> values) {
  std::uint64_t n = 1;
  for (auto e : shape) n *= e;
  if (n != values.size()) throw ArgumentError("tensor '" + name + "': value count does not match shape");
  if (find(name)) throw ArgumentError("duplicate tensor name '" + name + "'");
  tensors.push_back({std::move(name), std::move(shape), std::move(values)});
}

const NamedTensor* TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& TensorFile::get(const std::string& name) const {
  const NamedTensor* t = find(name);
  if (!t) throw ConfigError("checkpoint has no tensor '" + name + "'");
  return *t;
}

double TensorFile::scalar(const std::string& name) const {
  const NamedTensor& t = get(name);
  if (t.values.size() != 1) throw ConfigError("checkpoint tensor '" + name + "' is not a scalar");
  return t.values[0];
}

std::vector<unsigned char> encode_tensors(const TensorFile& f) {
  binio::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(f.tensors.size()));
  for (const auto& t : f.tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) w.u32(e);
    for (float v : t.values) w.f32(v);
  }
  return w.data();
}

TensorFile decode_tensors(std::vector<unsigned char> bytes) {
  binio::Reader r(std::move(bytes));
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw FormatError("not a checkpoint file (bad magic)", 0);
  const std::uint64_t vpos = r.offset();
  if (r.u32("version") != kVersion) throw FormatError("unsupported checkpoint version", vpos);
  const std::uint32_t count = r.u32("tensor count");
  TensorFile f;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint64_t start = r.offset();
    NamedTensor t;
    t.name = r.bytes(r.u32("name length"), "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw FormatError("implausible tensor rank", start);
    unsigned __int128 n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.u32("extent"));
      n *= t.shape.back();
    }
    if (n * 4 > r.remaining()) throw FormatError("truncated file while reading tensor '" + t.name + "'", r.offset());
    t.values.resize(static_cast<std::size_t>(n));
    for (auto& v : t.values) v = r.f32("values");
    if (f.find(t.name)) throw FormatError("duplicate tensor name '" + t.name + "'", start);
    f.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint payload", r.offset());
  return f;
}

void write_tensors(const std::string& path, const TensorFile& f) {
  binio::write_file(path, encode_tensors(f));
}

TensorFile read_tensors(const std::string& path) {
  return decode_tensors(binio::read_file(path));
}

NormStats quantize(const NormStats& s) {
  NormStats q = s;
  q.u_mean = q32(s.u_mean);
  q.u_std = q32(s.u_std);
  q.target_mean = q32(s.target_mean);
  q.target_std = q32(s.target_std);
  q.c_mean = q32(s.c_mean);
  q.c_std = q32(s.c_std);
  q.global_mean = q32(s.global_mean);
  q.global_std = q32(s.global_std);
  q.t_min = q32(s.t_min);
  q.t_max = q32(s.t_max);
  q.tau_max = q32(s.tau_max);
  return q;
}

TensorFile to_tensors(const TrainedModel& m) {
  TensorFile f;
  const ModelConfig& c = m.model;
  f.add_scalar("config/latent", c.latent);
  f.add_scalar("config/hidden", c.hidden);
  f.add_scalar("config/cond_hidden", c.cond_hidden);
  f.add_scalar("config/processor_steps", c.processor_steps);
  f.add_scalar("config/field_channels", c.field_channels);
  f.add_scalar("config/coeff_channels", c.coeff_channels);
  f.add_scalar("config/phys_struct_width", c.phys_struct_width);
  f.add_scalar("config/reg_struct_width", c.reg_struct_width);
  f.add_scalar("config/edge_struct_width", c.edge_struct_width);
  f.add_scalar("config/norm_eps", c.norm_eps);
  const GraphConfig& g = m.graph;
  f.add_scalar("config/subsample_factor", g.subsample_factor);
  f.add_scalar("config/overlap_encoder", g.overlap_encoder);
  f.add_scalar("config/overlap_decoder", g.overlap_decoder);
  f.add_scalar("config/edge_levels", g.edge_levels);
  f.add_scalar("config/level_subsample", g.level_subsample);
  f.add_scalar("config/k_freq", g.k_freq);
  f.add_scalar("config/regional_count", static_cast<double>(m.regional_count));
  f.add_scalar("config/mask_prob", m.mask_prob);
  std::vector<float> per;
  for (bool p : m.periodic) per.push_back(p ? 1.0f : 0.0f);
  f.add("config/periodic", {static_cast<std::uint32_t>(per.size())}, per);

  const NormStats& s = m.stats;
  f.add_scalar("stats/kind", static_cast<double>(static_cast<int>(s.kind)));
  auto vec = [&](const std::string& name, const Eigen::RowVectorXd& v) {
    f.add("stats/" + name, {static_cast<std::uint32_t>(v.size())}, to_floats(v));
  };
  vec("u_mean", s.u_mean);
  vec("u_std", s.u_std);
  vec("target_mean", s.target_mean);
  vec("target_std", s.target_std);
  vec("c_mean", s.c_mean);
  vec("c_std", s.c_std);
  vec("global_mean", s.global_mean);
  vec("global_std", s.global_std);
  f.add_scalar("stats/t_min", s.t_min);
  f.add_scalar("stats/t_max", s.t_max);
  f.add_scalar("stats/tau_max", s.tau_max);

  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& v = m.params.values[i];
    f.add("params/" + m.params.names[i], {static_cast<std::uint32_t>(v.rows()), static_cast<std::uint32_t>(v.cols())},
          std::vector<float>(v.data(), v.data() + v.size()));
  }
  return f;
}

TrainedModel from_tensors(const TensorFile& f) {
  TrainedModel m;
  auto as_int = [&](const char* name) { return static_cast<int>(f.scalar(std::string("config/") + name)); };
  ModelConfig& c = m.model;
  c.latent = as_int("latent");
  c.hidden = as_int("hidden");
  c.cond_hidden = as_int("cond_hidden");
  c.processor_steps = as_int("processor_steps");
  c.field_channels = as_int("field_channels");
  c.coeff_channels = as_int("coeff_channels");
  c.phys_struct_width = as_int("phys_struct_width");
  c.reg_struct_width = as_int("reg_struct_width");
  c.edge_struct_width = as_int("edge_struct_width");
  c.norm_eps = f.scalar("config/norm_eps");
  GraphConfig& g = m.graph;
  g.subsample_factor = f.scalar("config/subsample_factor");
  g.overlap_encoder = f.scalar("config/overlap_encoder");
  g.overlap_decoder = f.scalar("config/overlap_decoder");
  g.edge_levels = as_int("edge_levels");
  g.level_subsample = f.scalar("config/level_subsample");
  g.k_freq = as_int("k_freq");
  m.regional_count = static_cast<Index>(f.scalar("config/regional_count"));
  m.mask_prob = f.scalar("config/mask_prob");
  for (float v : f.get("config/periodic").values) m.periodic.push_back(v != 0.0f);

  NormStats& s = m.stats;
  const int kind = static_cast<int>(f.scalar("stats/kind"));
  if (kind < 0 || kind > 2) throw ConfigError("checkpoint: unknown stepping kind");
  s.kind = static_cast<StepKind>(kind);
  s.u_mean = row_of(f.get("stats/u_mean"));
  s.u_std = row_of(f.get("stats/u_std"));
  s.target_mean = row_of(f.get("stats/target_mean"));
  s.target_std = row_of(f.get("stats/target_std"));
  s.c_mean = row_of(f.get("stats/c_mean"));
  s.c_std = row_of(f.get("stats/c_std"));
  s.global_mean = row_of(f.get("stats/global_mean"));
  s.global_std = row_of(f.get("stats/global_std"));
  s.t_min = f.scalar("stats/t_min");
  s.t_max = f.scalar("stats/t_max");
  s.tau_max = f.scalar("stats/tau_max");

  for (const auto& t : f.tensors) {
    if (t.name.rfind("params/", 0) != 0) continue;
    if (t.shape.size() != 2) throw ConfigError("checkpoint: parameter '" + t.name + "' is not a matrix");
    ad::Mat<float> v(t.shape[0], t.shape[1]);
    std::copy(t.values.begin(), t.values.end(), v.data());
    m.params.add(t.name.substr(7), std::move(v));
  }
  // Validates names and shapes against the stored configuration.
  (void)Model<float>(m.model, m.params);
  return m;
}

void save_model(const std::string& path, const TrainedModel& m) { write_tensors(path, to_tensors(m)); }

TrainedModel load_model(const std::string& path) { return from_tensors(read_tensors(path)); }

}  // namespace rigno
