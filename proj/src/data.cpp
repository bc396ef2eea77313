#include "orientmp/data.hpp"

#include <cmath>
#include <numbers>

#include <json.hpp>

namespace orientmp {

namespace {

void append_points(std::vector<double>& out, const Points& p) { out.insert(out.end(), p.data(), p.data() + p.size()); }

Points points_at(const Record& r, std::size_t sample) {
  const std::size_t n = r.shape[1];
  Points p(static_cast<Eigen::Index>(n), 3);
  std::copy_n(r.values.begin() + static_cast<std::ptrdiff_t>(sample * n * 3), n * 3, p.data());
  return p;
}

void check_record(const Record& r, std::size_t rank, const char* what) {
  if (r.shape.size() != rank) throw ConfigError(std::string("dataset record ") + what + " has wrong rank");
}

}  // namespace

Points nbody_forces(const Points& x, const Eigen::VectorXd& q, double softening) {
  const Eigen::Index n = x.rows();
  Points f = Points::Zero(n, 3);
  const double eps2 = softening * softening;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Eigen::RowVector3d d = x.row(i) - x.row(j);
      const double r2 = d.squaredNorm() + eps2;
      const Eigen::RowVector3d fij = (q[i] * q[j] / (r2 * std::sqrt(r2))) * d;
      f.row(i) += fij;
      f.row(j) -= fij;
    }
  }
  return f;
}

double nbody_energy(const NBodyState& s, double softening) {
  const double kinetic = 0.5 * s.velocities.squaredNorm();
  double potential = 0.0;
  const double eps2 = softening * softening;
  for (Eigen::Index i = 0; i < s.positions.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < s.positions.rows(); ++j) {
      const double r2 = (s.positions.row(i) - s.positions.row(j)).squaredNorm() + eps2;
      potential += s.charges[i] * s.charges[j] / std::sqrt(r2);
    }
  }
  return kinetic + potential;
}

NBodyState sample_nbody_state(Rng& rng, std::size_t n_particles) {
  if (n_particles < 2) throw ArgumentError("nbody: need at least 2 particles, got " + std::to_string(n_particles));
  const auto n = static_cast<Eigen::Index>(n_particles);
  NBodyState s;
  s.positions.resize(n, 3);
  s.velocities.resize(n, 3);
  s.charges.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) s.positions(i, c) = rng.normal();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) s.velocities(i, c) = rng.normal(0.0, 0.5);
  }
  for (Eigen::Index i = 0; i < n; ++i) s.charges[i] = i % 2 == 0 ? 1.0 : -1.0;
  if (n % 2 == 1) s.charges[n - 1] = rng.uniform() < 0.5 ? 1.0 : -1.0;
  // Shuffle charges so the sign pattern carries no index information.
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(s.charges[i], s.charges[j]);
  }
  return s;
}

NBodyTrajectory integrate_nbody(const NBodyState& initial, std::size_t n_steps, double dt, double softening) {
  if (!(dt > 0.0)) throw ArgumentError("nbody: dt must be positive");
  if (initial.positions.rows() < 2) throw ArgumentError("nbody: need at least 2 particles");
  NBodyTrajectory traj;
  traj.charges = initial.charges;
  traj.positions.reserve(n_steps + 1);
  traj.velocities.reserve(n_steps + 1);
  Points x = initial.positions;
  Points v = initial.velocities;
  Points a = nbody_forces(x, initial.charges, softening);
  traj.positions.push_back(x);
  traj.velocities.push_back(v);
  for (std::size_t t = 0; t < n_steps; ++t) {
    v += 0.5 * dt * a;
    x += dt * v;
    a = nbody_forces(x, initial.charges, softening);
    v += 0.5 * dt * a;
    traj.positions.push_back(x);
    traj.velocities.push_back(v);
  }
  return traj;
}

NBodyTrajectory simulate_nbody(Rng& rng, std::size_t n_particles, std::size_t n_steps, double dt, double softening) {
  return integrate_nbody(sample_nbody_state(rng, n_particles), n_steps, dt, softening);
}

double linear_baseline_mse(const Record& x, const Record& v, const Record& y, double elapsed) {
  if (x.values.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    const double e = x.values[i] + v.values[i] * elapsed - y.values[i];
    acc += e * e;
  }
  return acc / static_cast<double>(x.values.size());
}

DatasetFile gen_nbody_dataset(std::uint64_t seed, const NBodyDatasetConfig& cfg) {
  if (cfg.particles < 2) throw ArgumentError("nbody: need at least 2 particles, got " + std::to_string(cfg.particles));
  if (!(cfg.dt > 0.0)) throw ArgumentError("nbody: dt must be positive");
  DatasetFile file;
  file.kind = DatasetKind::nbody;
  file.seed = seed;
  nlohmann::ordered_json meta = {{"generator", "nbody"},          {"seed", seed},
                                 {"particles", cfg.particles},    {"train_trajectories", cfg.train_trajectories},
                                 {"test_trajectories", cfg.test_trajectories},
                                 {"horizon", cfg.horizon},        {"dt", cfg.dt},
                                 {"softening", cfg.softening}};

  const Rng root(seed);
  const std::size_t n = cfg.particles;
  std::vector<double> baseline;
  for (const auto& [split, count, tag] : {std::tuple{std::string("train"), cfg.train_trajectories, 0ULL},
                                          std::tuple{std::string("test"), cfg.test_trajectories, 1ULL}}) {
    std::vector<double> xs, vs, qs, ys;
    const Rng split_rng = root.split(tag);
    for (std::size_t s = 0; s < count; ++s) {
      Rng rng = split_rng.split(s);
      const NBodyTrajectory traj = simulate_nbody(rng, n, cfg.horizon, cfg.dt, cfg.softening);
      append_points(xs, traj.positions.front());
      append_points(vs, traj.velocities.front());
      append_points(ys, traj.positions.back());
      qs.insert(qs.end(), traj.charges.data(), traj.charges.data() + traj.charges.size());
    }
    file.add("x_" + split, {count, n, 3}, std::move(xs));
    file.add("v_" + split, {count, n, 3}, std::move(vs));
    file.add("q_" + split, {count, n}, std::move(qs));
    file.add("y_" + split, {count, n, 3}, std::move(ys));
    const double elapsed = static_cast<double>(cfg.horizon) * cfg.dt;
    baseline.push_back(linear_baseline_mse(file.get("x_" + split), file.get("v_" + split), file.get("y_" + split),
                                           elapsed));
  }
  file.add("baseline", {2}, baseline);
  meta["baseline_mse"] = {{"train", baseline[0]}, {"test", baseline[1]}};
  file.metadata = meta.dump();
  return file;
}

std::vector<NBodySample> nbody_samples(const DatasetFile& file, const std::string& split) {
  if (file.kind != DatasetKind::nbody) throw ConfigError("expected an nbody dataset, got " + to_string(file.kind));
  if (split != "train" && split != "test") throw ArgumentError("invalid split '" + split + "' (valid: train, test)");
  const Record& x = file.get("x_" + split);
  const Record& v = file.get("v_" + split);
  const Record& q = file.get("q_" + split);
  const Record& y = file.get("y_" + split);
  check_record(x, 3, "x");
  check_record(q, 2, "q");
  std::vector<NBodySample> out;
  const std::size_t count = x.shape[0];
  const std::size_t n = x.shape[1];
  for (std::size_t s = 0; s < count; ++s) {
    NBodySample sample;
    sample.cloud.points = points_at(x, s);
    sample.cloud.velocities = points_at(v, s);
    sample.cloud.charges = Eigen::Map<const Eigen::VectorXd>(q.values.data() + s * n, static_cast<Eigen::Index>(n));
    sample.target = points_at(y, s);
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shapes

std::string to_string(RotationMode mode) {
  switch (mode) {
    case RotationMode::none: return "none";
    case RotationMode::z: return "z";
    case RotationMode::so3: return "so3";
  }
  return "?";
}

RotationMode parse_rotation_mode(const std::string& s) {
  if (s == "none") return RotationMode::none;
  if (s == "z") return RotationMode::z;
  if (s == "so3") return RotationMode::so3;
  throw ArgumentError("invalid rotation '" + s + "' (valid: none, z, so3)");
}

ShapeSample sample_shape(Rng& rng, ShapeClass cls, std::size_t n_points) {
  if (n_points < 8) throw ArgumentError("shapes: need at least 8 points, got " + std::to_string(n_points));
  const auto n = static_cast<Eigen::Index>(n_points);
  ShapeSample s;
  s.label = cls;
  s.points.resize(n, 3);
  s.normals.resize(n, 3);

  switch (cls) {
    case ShapeClass::sphere:
      for (Eigen::Index i = 0; i < n; ++i) {
        Vec3 p;
        do {
          p = Vec3(rng.normal(), rng.normal(), rng.normal());
        } while (p.norm() < 1e-12);
        p.normalize();
        s.points.row(i) = p.transpose();
        s.normals.row(i) = p.transpose();
      }
      break;

    case ShapeClass::cuboid: {
      Vec3 half(1.0, rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0));
      half /= half.maxCoeff();
      // Face pairs normal to x, y, z with areas proportional to the other two extents.
      const double areas[3] = {half.y() * half.z(), half.x() * half.z(), half.x() * half.y()};
      const double total = areas[0] + areas[1] + areas[2];
      for (Eigen::Index i = 0; i < n; ++i) {
        const double pick = rng.uniform() * total;
        const int axis = pick < areas[0] ? 0 : pick < areas[0] + areas[1] ? 1 : 2;
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        Vec3 p;
        for (int c = 0; c < 3; ++c) p[c] = rng.uniform(-half[c], half[c]);
        p[axis] = sign * half[axis];
        Vec3 normal = Vec3::Zero();
        normal[axis] = sign;
        s.points.row(i) = p.transpose();
        s.normals.row(i) = normal.transpose();
      }
      break;
    }

    case ShapeClass::cylinder: {
      double radius = 1.0;
      double half_height = rng.uniform(0.5, 2.0);
      const double scale = std::max(radius, half_height);
      radius /= scale;
      half_height /= scale;
      const double side = 2.0 * std::numbers::pi * radius * 2.0 * half_height;
      const double caps = 2.0 * std::numbers::pi * radius * radius;
      for (Eigen::Index i = 0; i < n; ++i) {
        Vec3 p;
        Vec3 normal;
        if (rng.uniform() * (side + caps) < side) {
          const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
          p = Vec3(radius * std::cos(theta), radius * std::sin(theta), rng.uniform(-half_height, half_height));
          normal = Vec3(std::cos(theta), std::sin(theta), 0.0);
        } else {
          const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
          const double r = radius * std::sqrt(rng.uniform());
          const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
          p = Vec3(r * std::cos(theta), r * std::sin(theta), sign * half_height);
          normal = Vec3(0.0, 0.0, sign);
        }
        s.points.row(i) = p.transpose();
        s.normals.row(i) = normal.transpose();
      }
      break;
    }
  }
  return s;
}

DatasetFile gen_shapes(std::uint64_t seed, const ShapesConfig& cfg) {
  if (cfg.points < 8) throw ArgumentError("shapes: need at least 8 points, got " + std::to_string(cfg.points));
  if (cfg.noise < 0.0) throw ArgumentError("shapes: noise must be non-negative");
  DatasetFile file;
  file.kind = DatasetKind::shapes;
  file.seed = seed;
  nlohmann::ordered_json meta = {{"generator", "shapes"},     {"seed", seed},
                                 {"per_class", cfg.per_class}, {"points", cfg.points},
                                 {"noise", cfg.noise},         {"rotation", to_string(cfg.rotation)},
                                 {"classes", {"sphere", "cuboid", "cylinder"}}};
  file.metadata = meta.dump();

  const Rng root(seed);
  const std::size_t count = cfg.per_class * kShapeClasses;
  std::vector<double> pts, nrm, labels;
  pts.reserve(count * cfg.points * 3);
  nrm.reserve(count * cfg.points * 3);
  for (std::size_t s = 0; s < count; ++s) {
    const auto cls = static_cast<ShapeClass>(s / cfg.per_class);
    Rng shape_rng = root.split(0).split(s);
    Rng noise_rng = root.split(1).split(s);
    Rng pose_rng = root.split(2).split(s);
    ShapeSample sample = sample_shape(shape_rng, cls, cfg.points);
    if (cfg.noise > 0.0) {
      for (Eigen::Index i = 0; i < sample.points.size(); ++i) sample.points.data()[i] += cfg.noise * noise_rng.normal();
    }
    RigidTransform pose;
    if (cfg.rotation == RotationMode::z) pose = sample_rotation_z(pose_rng);
    if (cfg.rotation == RotationMode::so3) pose = sample_rotation(pose_rng);
    if (cfg.rotation != RotationMode::none) {
      sample.points = apply(pose, sample.points);
      sample.normals = (sample.normals * pose.rotation.transpose()).eval();
    }
    append_points(pts, sample.points);
    append_points(nrm, sample.normals);
    labels.push_back(static_cast<double>(cls));
  }
  file.add("points", {count, cfg.points, 3}, std::move(pts));
  file.add("normals", {count, cfg.points, 3}, std::move(nrm));
  file.add("labels", {count}, std::move(labels));
  return file;
}

std::vector<PointCloud> shape_clouds(const DatasetFile& file) {
  if (file.kind != DatasetKind::shapes) throw ConfigError("expected a shapes dataset, got " + to_string(file.kind));
  const Record& pts = file.get("points");
  const Record& nrm = file.get("normals");
  const Record& lab = file.get("labels");
  check_record(pts, 3, "points");
  std::vector<PointCloud> out;
  for (std::size_t s = 0; s < pts.shape[0]; ++s) {
    PointCloud c;
    c.points = points_at(pts, s);
    c.normals = points_at(nrm, s);
    c.label = static_cast<int>(lab.values[s]);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace orientmp
