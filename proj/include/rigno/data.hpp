#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rigno/geometry.hpp"
#include "rigno/rng.hpp"

namespace rigno {

/// M trajectories of an s-channel field on one fixed point cloud.
struct TrajectoryDataset {
  PointCloud cloud;
  std::vector<double> times;
  Index num_samples = 0;
  Index channels = 1;
  Index coeff_channels = 0;
  std::vector<Points> fields;  // [m * N_t + n] -> N x s
  std::vector<Points> coeffs;  // [m] -> N x q, empty when q = 0

  // Not stored in the file.
  std::string pde;
  double diffusivity = 0.0;
  std::uint64_t seed = 0;

  Index num_times() const { return static_cast<Index>(times.size()); }
  Index num_points() const { return cloud.size(); }
  const Points& field(Index m, Index n) const { return fields[static_cast<std::size_t>(m * num_times() + n)]; }
  Points& field(Index m, Index n) { return fields[static_cast<std::size_t>(m * num_times() + n)]; }
  const Points* coeff(Index m) const { return coeff_channels > 0 ? &coeffs[static_cast<std::size_t>(m)] : nullptr; }

  void validate() const;
  /// The listed trajectories, in the given order.
  TrajectoryDataset select_samples(const std::vector<Index>& samples) const;
  /// Samples [begin, end).
  TrajectoryDataset slice(Index begin, Index end) const;
  /// Restriction to the listed points of the cloud.
  TrajectoryDataset select_points(const std::vector<Index>& points) const;
  /// The listed snapshots (times and fields), in the given order.
  TrajectoryDataset select_times(const std::vector<Index>& snapshots) const;
};

/// Sine-series coefficients of one Dirichlet heat trajectory on [0,1]^2.
struct DirichletModes {
  std::vector<double> mu;  // mu[m-1] for mode m
  double a = 1.0;

  /// -(1/M) sum mu_m exp(-2 a^2 pi^2 m^2 t) sin(pi m x) sin(pi m y) / sqrt(m)
  double operator()(double x, double y, double t) const;
};

/// Real Fourier series of one periodic heat trajectory on [0,1]^2.
struct PeriodicModes {
  struct Mode {
    int k, l;
    double cos_coeff, sin_coeff;
  };
  std::vector<Mode> modes;
  double a = 1.0;

  /// sum (A cos(2 pi (k x + l y)) + B sin(...)) exp(-4 a^2 pi^2 (k^2 + l^2) t)
  double operator()(double x, double y, double t) const;
};

/// Equally spaced snapshot times on [0, t_final].
std::vector<double> uniform_times(double t_final, Index count);

TrajectoryDataset gen_heat_dirichlet(Index samples, Index n_points, double t_final, int modes, double a, Rng& rng,
                                     Index n_times = 21);

/// Modes with |k|, |l| <= k_modes; coefficients U(-1, 1) / (1 + k^2 + l^2).
TrajectoryDataset gen_heat_periodic(Index samples, Index n_points, double t_final, int k_modes, double a, Rng& rng,
                                    Index n_times = 21);

/// Random per-sample mode sets, drawn in the same order as the generators use them.
std::vector<DirichletModes> draw_dirichlet_modes(Index samples, int modes, double a, Rng& rng);
std::vector<PeriodicModes> draw_periodic_modes(Index samples, int k_modes, double a, Rng& rng);

/// Evaluates the given trajectories on a cloud.
TrajectoryDataset eval_dirichlet(const std::vector<DirichletModes>& modes, const PointCloud& cloud,
                                 const std::vector<double>& times);
TrajectoryDataset eval_periodic(const std::vector<PeriodicModes>& modes, const PointCloud& cloud,
                                const std::vector<double>& times);

/// Uniform points in the domain box.
PointCloud random_cloud(const Domain& domain, Index n, Rng& rng);

/// n distinct rows of the cloud, uniformly without replacement, in draw order.
std::vector<Index> subsample_indices(Index available, Index n, Rng& rng);
PointCloud subsample_cloud(const PointCloud& cloud, Index n, Rng& rng);

/// Cell-centred g x g grid on the unit square.
PointCloud grid_cloud(Index g);

void write_dataset(const std::string& path, const TrajectoryDataset& ds);
TrajectoryDataset read_dataset(const std::string& path);
std::vector<unsigned char> encode_dataset(const TrajectoryDataset& ds);
TrajectoryDataset decode_dataset(std::vector<unsigned char> bytes);

}  // namespace rigno
