#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "orientmp/dataset_file.hpp"
#include "orientmp/geometry.hpp"
#include "orientmp/rng.hpp"

namespace orientmp {

// ---------------------------------------------------------------------------
// Charged-particle N-body simulation

inline constexpr double kDefaultSoftening = 0.1;
inline constexpr double kDefaultDt = 1e-3;

struct NBodyState {
  Points positions;
  Points velocities;
  Eigen::VectorXd charges;
};

/// positions[t], velocities[t] for t = 0..T-1 (T = steps + 1).
struct NBodyTrajectory {
  std::vector<Points> positions;
  std::vector<Points> velocities;
  Eigen::VectorXd charges;

  std::size_t steps() const { return positions.size() - 1; }
};

/// F_i = sum_j q_i q_j (x_i - x_j) / (|x_i - x_j|^2 + eps^2)^(3/2); each pair
/// is evaluated once and applied with opposite signs.
Points nbody_forces(const Points& positions, const Eigen::VectorXd& charges, double softening = kDefaultSoftening);

/// Kinetic plus softened Coulomb potential energy (unit masses).
double nbody_energy(const NBodyState& state, double softening = kDefaultSoftening);

/// Initial conditions: positions ~ N(0, 1), velocities ~ N(0, 0.5^2), charges
/// balanced +/-1 with the odd one out drawn at random.
NBodyState sample_nbody_state(Rng& rng, std::size_t n_particles);

/// Kick-drift-kick leapfrog with unit masses.
NBodyTrajectory integrate_nbody(const NBodyState& initial, std::size_t n_steps, double dt,
                                double softening = kDefaultSoftening);

NBodyTrajectory simulate_nbody(Rng& rng, std::size_t n_particles, std::size_t n_steps, double dt = kDefaultDt,
                               double softening = kDefaultSoftening);

struct NBodyDatasetConfig {
  std::size_t train_trajectories = 300;
  std::size_t test_trajectories = 100;
  std::size_t particles = 5;
  std::size_t horizon = 500;
  double dt = kDefaultDt;
  double softening = kDefaultSoftening;
};

/// Records {x,v,q,y}_{train,test} with inputs at t = 0 and targets at
/// t = horizon, plus "baseline" = linear-extrapolation MSE [train, test].
DatasetFile gen_nbody_dataset(std::uint64_t seed, const NBodyDatasetConfig& cfg);

/// Mean over all coordinates of (x + v * horizon * dt - y)^2.
double linear_baseline_mse(const Record& x, const Record& v, const Record& y, double elapsed);

struct NBodySample {
  PointCloud cloud;  // positions, velocities and charges
  Points target;
};

std::vector<NBodySample> nbody_samples(const DatasetFile& file, const std::string& split);

// ---------------------------------------------------------------------------
// Synthetic shapes

enum class ShapeClass : int { sphere = 0, cuboid = 1, cylinder = 2 };
inline constexpr int kShapeClasses = 3;

enum class RotationMode { none, z, so3 };

std::string to_string(RotationMode mode);
RotationMode parse_rotation_mode(const std::string& s);

struct ShapeSample {
  Points points;
  Points normals;
  ShapeClass label = ShapeClass::sphere;
};

/// Uniform surface samples with analytic outward normals, before noise and rotation.
ShapeSample sample_shape(Rng& rng, ShapeClass cls, std::size_t n_points);

struct ShapesConfig {
  std::size_t per_class = 200;
  std::size_t points = 256;
  double noise = 0.0;
  RotationMode rotation = RotationMode::none;
};

/// Sample s uses independent streams for geometry, noise and pose, so files
/// generated with the same seed but different rotation modes hold the same
/// underlying shapes. Records: points [S,N,3], normals [S,N,3], labels [S].
DatasetFile gen_shapes(std::uint64_t seed, const ShapesConfig& cfg);

std::vector<PointCloud> shape_clouds(const DatasetFile& file);

}  // namespace orientmp
