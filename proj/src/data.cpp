#include "rigno/data.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "rigno/binio.hpp"

namespace rigno {

namespace {

constexpr char kMagic[4] = {'R', 'G', 'N', 'D'};
constexpr std::uint32_t kVersion = 1;

// Values are kept at storage precision so in-memory and on-disk datasets agree.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void binio::write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArgumentError("failed writing '" + path + "'");
}

std::vector<unsigned char> binio::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void TrajectoryDataset::validate() const {
  cloud.validate();
  if (times.empty()) throw ArgumentError("dataset: no snapshots");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw ArgumentError("dataset: times must be strictly increasing");
  }
  if (channels < 1 || coeff_channels < 0 || num_samples < 0) throw ArgumentError("dataset: bad channel counts");
  if (static_cast<Index>(fields.size()) != num_samples * num_times()) {
    throw ArgumentError("dataset: field count does not match samples x times");
  }
  for (const auto& f : fields) {
    if (f.rows() != num_points() || f.cols() != channels) throw ArgumentError("dataset: field shape mismatch");
  }
  if (static_cast<Index>(coeffs.size()) != (coeff_channels > 0 ? num_samples : 0)) {
    throw ArgumentError("dataset: coefficient count mismatch");
  }
  for (const auto& c : coeffs) {
    if (c.rows() != num_points() || c.cols() != coeff_channels) throw ArgumentError("dataset: coefficient shape mismatch");
  }
}

TrajectoryDataset TrajectoryDataset::select_samples(const std::vector<Index>& samples) const {
  TrajectoryDataset out = *this;
  out.num_samples = static_cast<Index>(samples.size());
  out.fields.clear();
  out.coeffs.clear();
  for (Index m : samples) {
    if (m < 0 || m >= num_samples) throw ArgumentError("dataset: sample index out of range");
    for (Index n = 0; n < num_times(); ++n) out.fields.push_back(field(m, n));
    if (coeff_channels > 0) out.coeffs.push_back(coeffs[static_cast<std::size_t>(m)]);
  }
  return out;
}

TrajectoryDataset TrajectoryDataset::slice(Index begin, Index end) const {
  if (begin < 0 || end > num_samples || begin > end) throw ArgumentError("dataset: bad sample range");
  std::vector<Index> s;
  for (Index m = begin; m < end; ++m) s.push_back(m);
  return select_samples(s);
}

TrajectoryDataset TrajectoryDataset::select_points(const std::vector<Index>& points) const {
  TrajectoryDataset out = *this;
  const auto n = static_cast<Index>(points.size());
  out.cloud.coords.resize(n, cloud.dim());
  for (Index i = 0; i < n; ++i) {
    if (points[i] < 0 || points[i] >= num_points()) throw ArgumentError("dataset: point index out of range");
    out.cloud.coords.row(i) = cloud.coords.row(points[i]);
  }
  auto pick = [&](const Points& src) {
    Points dst(n, src.cols());
    for (Index i = 0; i < n; ++i) dst.row(i) = src.row(points[i]);
    return dst;
  };
  for (std::size_t k = 0; k < fields.size(); ++k) out.fields[k] = pick(fields[k]);
  for (std::size_t k = 0; k < coeffs.size(); ++k) out.coeffs[k] = pick(coeffs[k]);
  return out;
}

TrajectoryDataset TrajectoryDataset::select_times(const std::vector<Index>& snapshots) const {
  TrajectoryDataset out = *this;
  out.times.clear();
  out.fields.clear();
  for (Index n : snapshots) {
    if (n < 0 || n >= num_times()) throw ArgumentError("dataset: snapshot index out of range");
    out.times.push_back(times[static_cast<std::size_t>(n)]);
  }
  for (Index m = 0; m < num_samples; ++m) {
    for (Index n : snapshots) out.fields.push_back(field(m, n));
  }
  return out;
}

double DirichletModes::operator()(double x, double y, double t) const {
  const double M = static_cast<double>(mu.size());
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = static_cast<double>(i + 1);
    const double decay = std::exp(-a * a * 2.0 * M_PI * M_PI * m * m * t);
    s += mu[i] * decay * std::sin(M_PI * m * x) * std::sin(M_PI * m * y) / std::sqrt(m);
  }
  return -s / M;
}

double PeriodicModes::operator()(double x, double y, double t) const {
  double s = 0.0;
  for (const Mode& md : modes) {
    const double ph = 2.0 * M_PI * (md.k * x + md.l * y);
    const double decay = std::exp(-a * a * 4.0 * M_PI * M_PI * (md.k * md.k + md.l * md.l) * t);
    s += decay * (md.cos_coeff * std::cos(ph) + md.sin_coeff * std::sin(ph));
  }
  return s;
}

std::vector<double> uniform_times(double t_final, Index count) {
  if (count < 2 || !(t_final > 0.0)) throw ArgumentError("uniform_times: need >= 2 snapshots and t_final > 0");
  std::vector<double> t(static_cast<std::size_t>(count));
  for (Index n = 0; n < count; ++n) t[n] = t_final * static_cast<double>(n) / static_cast<double>(count - 1);
  return t;
}

PointCloud random_cloud(const Domain& domain, Index n, Rng& rng) {
  domain.validate();
  PointCloud c;
  c.domain = domain;
  c.coords.resize(n, domain.dim());
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < domain.dim(); ++k) {
      double v = f32(uniform(rng, domain.lower[k], domain.upper[k]));
      if (v >= domain.upper[k] && domain.periodic[k]) v = domain.lower[k];
      c.coords(i, k) = v;
    }
  }
  return c;
}

std::vector<DirichletModes> draw_dirichlet_modes(Index samples, int modes, double a, Rng& rng) {
  if (modes < 1) throw ArgumentError("heat generator: need at least one mode");
  std::vector<DirichletModes> out(static_cast<std::size_t>(samples));
  for (auto& s : out) {
    s.a = a;
    s.mu.resize(static_cast<std::size_t>(modes));
    for (auto& v : s.mu) v = uniform(rng, -1.0, 1.0);
  }
  return out;
}

std::vector<PeriodicModes> draw_periodic_modes(Index samples, int k_modes, double a, Rng& rng) {
  if (k_modes < 0) throw ArgumentError("heat generator: k_modes must be >= 0");
  std::vector<PeriodicModes> out(static_cast<std::size_t>(samples));
  for (auto& s : out) {
    s.a = a;
    // Half of the frequency lattice: (k, l) and (-k, -l) give the same real mode.
    for (int k = 0; k <= k_modes; ++k) {
      for (int l = -k_modes; l <= k_modes; ++l) {
        if (k == 0 && l < 0) continue;
        const double w = 1.0 / (1.0 + k * k + l * l);
        PeriodicModes::Mode m{k, l, w * uniform(rng, -1.0, 1.0), 0.0};
        m.sin_coeff = (k == 0 && l == 0) ? 0.0 : w * uniform(rng, -1.0, 1.0);
        s.modes.push_back(m);
      }
    }
  }
  return out;
}

namespace {

template <typename Modes>
TrajectoryDataset eval_modes(const std::vector<Modes>& modes, const PointCloud& cloud,
                             const std::vector<double>& times, const char* tag) {
  if (cloud.dim() != 2) throw ArgumentError("heat generator: two-dimensional clouds only");
  TrajectoryDataset ds;
  ds.cloud = cloud;
  ds.times = times;
  ds.num_samples = static_cast<Index>(modes.size());
  ds.channels = 1;
  ds.pde = tag;
  ds.diffusivity = modes.empty() ? 0.0 : modes.front().a;
  const Index N = cloud.size();
  ds.fields.reserve(modes.size() * times.size());
  for (const auto& md : modes) {
    for (double t : times) {
      Points f(N, 1);
      for (Index i = 0; i < N; ++i) f(i, 0) = f32(md(cloud.coords(i, 0), cloud.coords(i, 1), t));
      ds.fields.push_back(std::move(f));
    }
  }
  return ds;
}

}  // namespace

TrajectoryDataset eval_dirichlet(const std::vector<DirichletModes>& modes, const PointCloud& cloud,
                                 const std::vector<double>& times) {
  return eval_modes(modes, cloud, times, "heat-dirichlet");
}

TrajectoryDataset eval_periodic(const std::vector<PeriodicModes>& modes, const PointCloud& cloud,
                                const std::vector<double>& times) {
  return eval_modes(modes, cloud, times, "heat-periodic");
}

TrajectoryDataset gen_heat_dirichlet(Index samples, Index n_points, double t_final, int modes, double a, Rng& rng,
                                     Index n_times) {
  if (n_points < 64) throw ArgumentError("heat generator: need at least 64 points");
  if (samples < 1) throw ArgumentError("heat generator: need at least one sample");
  const PointCloud cloud = random_cloud(Domain::unit_square(), n_points, rng);
  const auto md = draw_dirichlet_modes(samples, modes, a, rng);
  return eval_dirichlet(md, cloud, uniform_times(t_final, n_times));
}

TrajectoryDataset gen_heat_periodic(Index samples, Index n_points, double t_final, int k_modes, double a, Rng& rng,
                                    Index n_times) {
  if (n_points < 64) throw ArgumentError("heat generator: need at least 64 points");
  if (samples < 1) throw ArgumentError("heat generator: need at least one sample");
  const PointCloud cloud = random_cloud(Domain::unit_square(true, true), n_points, rng);
  const auto md = draw_periodic_modes(samples, k_modes, a, rng);
  return eval_periodic(md, cloud, uniform_times(t_final, n_times));
}

std::vector<Index> subsample_indices(Index available, Index n, Rng& rng) {
  if (n < 0 || n > available) throw ArgumentError("subsample: requested more points than available");
  const auto s = sample_without_replacement(available, n, rng);
  return std::vector<Index>(s.begin(), s.end());
}

PointCloud subsample_cloud(const PointCloud& cloud, Index n, Rng& rng) {
  const auto idx = subsample_indices(cloud.size(), n, rng);
  PointCloud out;
  out.domain = cloud.domain;
  out.coords.resize(n, cloud.dim());
  for (Index i = 0; i < n; ++i) out.coords.row(i) = cloud.coords.row(idx[i]);
  return out;
}

PointCloud grid_cloud(Index g) {
  if (g < 2) throw ArgumentError("grid_cloud: need at least 2 points per side");
  PointCloud c;
  c.domain = Domain::unit_square();
  c.coords.resize(g * g, 2);
  for (Index j = 0; j < g; ++j) {
    for (Index i = 0; i < g; ++i) {
      c.coords(j * g + i, 0) = (static_cast<double>(i) + 0.5) / static_cast<double>(g);
      c.coords(j * g + i, 1) = (static_cast<double>(j) + 0.5) / static_cast<double>(g);
    }
  }
  return c;
}

std::vector<unsigned char> encode_dataset(const TrajectoryDataset& ds) {
  ds.validate();
  binio::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  const Index d = ds.cloud.dim();
  std::uint32_t flags = 0;
  for (Index k = 0; k < d && k < 32; ++k) {
    if (ds.cloud.domain.periodic[k]) flags |= 1u << k;
  }
  for (Index v : {ds.num_samples, ds.num_times(), ds.num_points(), d, ds.channels, ds.coeff_channels}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u32(flags);
  for (Index k = 0; k < d; ++k) w.f64(ds.cloud.domain.lower[k]);
  for (Index k = 0; k < d; ++k) w.f64(ds.cloud.domain.upper[k]);
  for (double t : ds.times) w.f64(t);
  for (Index i = 0; i < ds.cloud.coords.size(); ++i) w.f32(static_cast<float>(ds.cloud.coords.data()[i]));
  for (const auto& f : ds.fields) {
    for (Index i = 0; i < f.size(); ++i) w.f32(static_cast<float>(f.data()[i]));
  }
  for (const auto& c : ds.coeffs) {
    for (Index i = 0; i < c.size(); ++i) w.f32(static_cast<float>(c.data()[i]));
  }
  return w.data();
}

TrajectoryDataset decode_dataset(std::vector<unsigned char> bytes) {
  binio::Reader r(std::move(bytes));
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw FormatError("not a dataset file (bad magic)", 0);
  const std::uint64_t vpos = r.offset();
  if (r.u32("version") != kVersion) throw FormatError("unsupported dataset version", vpos);
  const std::uint64_t hpos = r.offset();
  const Index M = r.u32("header"), Nt = r.u32("header"), N = r.u32("header"), d = r.u32("header"),
              s = r.u32("header"), q = r.u32("header");
  const std::uint32_t flags = r.u32("header");
  if (d < 1 || d > 3 || s < 1 || Nt < 1) throw FormatError("invalid dataset header", hpos);
  // Check the payload size up front so a corrupt header cannot trigger huge allocations.
  using U = unsigned __int128;
  const U payload = U(8) * (2 * U(d) + U(Nt)) + U(4) * (U(N) * U(d) + U(M) * U(Nt) * U(N) * U(s) + U(M) * U(N) * U(q));
  if (payload > U(r.remaining())) throw FormatError("truncated file while reading dataset payload", r.offset());

  TrajectoryDataset ds;
  ds.num_samples = M;
  ds.channels = s;
  ds.coeff_channels = q;
  ds.cloud.domain.lower.resize(d);
  ds.cloud.domain.upper.resize(d);
  ds.cloud.domain.periodic.assign(static_cast<std::size_t>(d), false);
  for (Index k = 0; k < d; ++k) ds.cloud.domain.periodic[k] = (flags >> k) & 1u;
  for (Index k = 0; k < d; ++k) ds.cloud.domain.lower[k] = r.f64("bounds");
  for (Index k = 0; k < d; ++k) ds.cloud.domain.upper[k] = r.f64("bounds");
  ds.times.resize(static_cast<std::size_t>(Nt));
  for (auto& t : ds.times) t = r.f64("times");
  ds.cloud.coords.resize(N, d);
  for (Index i = 0; i < N * d; ++i) ds.cloud.coords.data()[i] = r.f32("coords");
  ds.fields.resize(static_cast<std::size_t>(M * Nt));
  for (auto& f : ds.fields) {
    f.resize(N, s);
    for (Index i = 0; i < N * s; ++i) f.data()[i] = r.f32("fields");
  }
  if (q > 0) {
    ds.coeffs.resize(static_cast<std::size_t>(M));
    for (auto& c : ds.coeffs) {
      c.resize(N, q);
      for (Index i = 0; i < N * q; ++i) c.data()[i] = r.f32("coeffs");
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after dataset payload", r.offset());
  try {
    ds.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("inconsistent dataset: ") + e.what(), hpos);
  }
  return ds;
}

void write_dataset(const std::string& path, const TrajectoryDataset& ds) {
  binio::write_file(path, encode_dataset(ds));
}

TrajectoryDataset read_dataset(const std::string& path) {
  return decode_dataset(binio::read_file(path));
}

}  // namespace rigno
