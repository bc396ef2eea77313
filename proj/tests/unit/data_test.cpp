#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "orientmp/data.hpp"
#include "orientmp/dataset_file.hpp"
#include "unit/test_util.hpp"

namespace orientmp {
namespace {

using testing::random_points;

Vec3 total(const Points& p) { return p.colwise().sum().transpose(); }

TEST(NBody, OppositeChargesAttractWithSoftenedInverseSquare) {
  Points x(2, 3);
  x << 0, 0, 0, 1, 0, 0;
  const Eigen::VectorXd q = (Eigen::VectorXd(2) << 1, -1).finished();
  const Points f = nbody_forces(x, q);
  const double expected = 1.0 / std::pow(1.0 + kDefaultSoftening * kDefaultSoftening, 1.5);
  EXPECT_NEAR(f(0, 0), expected, 1e-15);
  EXPECT_NEAR(f(1, 0), -expected, 1e-15);
  EXPECT_EQ(f(0, 1), 0.0);
}

TEST(NBody, LikeChargesRepelWithExactlyOppositeForces) {
  Rng rng(1);
  const Points x = random_points(rng, 2);
  const Eigen::VectorXd q = Eigen::VectorXd::Ones(2);
  const Points f = nbody_forces(x, q);
  EXPECT_EQ(f.row(0), (-f.row(1)).eval());
  EXPECT_LT(f.row(0).dot(x.row(1) - x.row(0)), 0.0);
}

TEST(NBody, ChargesAreBalanced) {
  Rng rng(2);
  for (std::size_t n : {2, 5, 6, 9}) {
    const NBodyState s = sample_nbody_state(rng, n);
    const double sum = s.charges.sum();
    EXPECT_LE(std::abs(sum), n % 2 == 0 ? 0.0 : 1.0);
    for (Eigen::Index i = 0; i < s.charges.size(); ++i) EXPECT_EQ(std::abs(s.charges[i]), 1.0);
  }
  EXPECT_THROW(sample_nbody_state(rng, 1), ArgumentError);
}

TEST(NBody, MomentumIsConservedEveryStep) {
  Rng rng(3);
  const NBodyTrajectory t = simulate_nbody(rng, 5, 1000, kDefaultDt);
  ASSERT_EQ(t.steps(), 1000u);
  const Vec3 p0 = total(t.velocities.front());
  for (const auto& v : t.velocities) EXPECT_LT((total(v) - p0).norm(), 1e-9);
}

TEST(NBody, EnergyDriftBelowOnePercent) {
  Rng rng(4);
  const NBodyState s = sample_nbody_state(rng, 5);
  const NBodyTrajectory t = integrate_nbody(s, 1000, kDefaultDt);
  const double e0 = nbody_energy(s);
  const double e1 = nbody_energy({t.positions.back(), t.velocities.back(), t.charges});
  EXPECT_LT(std::abs(e1 - e0), 0.01 * std::abs(e0));
}

TEST(NBody, SimulationCommutesWithRigidMotions) {
  Rng rng(5);
  const NBodyState s = sample_nbody_state(rng, 5);
  const RigidTransform g = sample_rigid(rng);
  NBodyState gs = s;
  gs.positions = apply(g, s.positions);
  gs.velocities = s.velocities * g.rotation.transpose();
  const NBodyTrajectory a = integrate_nbody(s, 100, kDefaultDt);
  const NBodyTrajectory b = integrate_nbody(gs, 100, kDefaultDt);
  EXPECT_LT((apply(g, a.positions.back()) - b.positions.back()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((a.velocities.back() * g.rotation.transpose() - b.velocities.back()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(NBody, DatasetIsDeterministicAndRecordsBaseline) {
  NBodyDatasetConfig cfg;
  cfg.train_trajectories = 4;
  cfg.test_trajectories = 3;
  cfg.horizon = 50;
  const DatasetFile a = gen_nbody_dataset(9, cfg);
  const DatasetFile b = gen_nbody_dataset(9, cfg);
  EXPECT_EQ(serialize_dataset(a), serialize_dataset(b));
  EXPECT_NE(serialize_dataset(a), serialize_dataset(gen_nbody_dataset(10, cfg)));
  EXPECT_EQ(a.get("x_train").shape, (Shape{4, 5, 3}));
  EXPECT_EQ(a.get("q_test").shape, (Shape{3, 5}));
  const double elapsed = cfg.horizon * cfg.dt;
  const Record& baseline = a.get("baseline");
  EXPECT_EQ(baseline.values[0], linear_baseline_mse(a.get("x_train"), a.get("v_train"), a.get("y_train"), elapsed));
  EXPECT_EQ(baseline.values[1], linear_baseline_mse(a.get("x_test"), a.get("v_test"), a.get("y_test"), elapsed));
  EXPECT_GT(baseline.values[1], 0.0);
  EXPECT_EQ(nbody_samples(a, "test").size(), 3u);
  EXPECT_THROW(nbody_samples(a, "valid"), ArgumentError);
}

TEST(NBody, ZeroHorizonTargetsEqualInputs) {
  NBodyDatasetConfig cfg;
  cfg.train_trajectories = 2;
  cfg.test_trajectories = 1;
  cfg.horizon = 0;
  const DatasetFile f = gen_nbody_dataset(1, cfg);
  EXPECT_EQ(f.get("x_train").values, f.get("y_train").values);
  EXPECT_EQ(f.get("baseline").values[0], 0.0);
}

TEST(Shapes, NormalsAreUnitAndPointsLieOnSurfaces) {
  Rng rng(6);
  for (int cls = 0; cls < kShapeClasses; ++cls) {
    for (int rep = 0; rep < 5; ++rep) {
      const ShapeSample s = sample_shape(rng, static_cast<ShapeClass>(cls), 200);
      EXPECT_EQ(s.label, static_cast<ShapeClass>(cls));
      for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
        const Vec3 p = s.points.row(i).transpose();
        const Vec3 n = s.normals.row(i).transpose();
        EXPECT_NEAR(n.norm(), 1.0, 1e-12);
        switch (static_cast<ShapeClass>(cls)) {
          case ShapeClass::sphere:
            EXPECT_EQ(p, n);
            EXPECT_NEAR(p.norm(), 1.0, 1e-12);
            break;
          case ShapeClass::cuboid: {
            // Axis-aligned normal; the point sits on the outermost slab along that axis.
            Eigen::Index axis = 0;
            n.cwiseAbs().maxCoeff(&axis);
            EXPECT_EQ(std::abs(n[axis]), 1.0);
            const double extent = s.points.col(axis).cwiseAbs().maxCoeff();
            EXPECT_NEAR(p[axis] * n[axis], extent, 1e-9);
            EXPECT_LE(p.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
            break;
          }
          case ShapeClass::cylinder: {
            const double r = std::hypot(p.x(), p.y());
            if (n.z() == 0.0) {
              EXPECT_NEAR(n.x() * r, p.x(), 1e-9);
              EXPECT_NEAR(n.y() * r, p.y(), 1e-9);
            } else {
              EXPECT_EQ(std::abs(n.z()), 1.0);
              EXPECT_NEAR(p.z() * n.z(), s.points.col(2).cwiseAbs().maxCoeff(), 1e-9);
            }
            break;
          }
        }
      }
    }
  }
  EXPECT_THROW(sample_shape(rng, ShapeClass::sphere, 7), ArgumentError);
}

/// Mean and standard deviation of the pairwise distances.
std::pair<double, double> pairwise_distance_stats(const Points& p) {
  double s = 0.0, s2 = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < p.rows(); ++j) {
      const double d = (p.row(i) - p.row(j)).norm();
      s += d;
      s2 += d * d;
      ++count;
    }
  }
  const double mean = s / static_cast<double>(count);
  return {mean, std::sqrt(s2 / static_cast<double>(count) - mean * mean)};
}

TEST(Shapes, ClassStatisticsDiffer) {
  const DatasetFile f = gen_shapes(3, {40, 64, 0.0, RotationMode::none});
  double mean[kShapeClasses] = {0, 0, 0};
  double spread[kShapeClasses] = {0, 0, 0};
  int count[kShapeClasses] = {0, 0, 0};
  for (const auto& c : shape_clouds(f)) {
    const auto [m, sd] = pairwise_distance_stats(c.points);
    mean[c.label] += m;
    spread[c.label] += sd;
    ++count[c.label];
  }
  for (int c = 0; c < kShapeClasses; ++c) {
    EXPECT_EQ(count[c], 40);
    mean[c] /= count[c];
    spread[c] /= count[c];
  }
  for (int a = 0; a < kShapeClasses; ++a) {
    for (int b = a + 1; b < kShapeClasses; ++b) {
      EXPECT_GT(std::max(std::abs(mean[a] - mean[b]), std::abs(spread[a] - spread[b])), 0.03) << a << " vs " << b;
    }
  }
}

TEST(Shapes, RotationModesShareGeometryAndCoRotateNormals) {
  const DatasetFile none = gen_shapes(4, {3, 32, 0.0, RotationMode::none});
  const DatasetFile z = gen_shapes(4, {3, 32, 0.0, RotationMode::z});
  const DatasetFile so3 = gen_shapes(4, {3, 32, 0.0, RotationMode::so3});
  const auto a = shape_clouds(none);
  const auto b = shape_clouds(z);
  const auto c = shape_clouds(so3);
  ASSERT_EQ(a.size(), 9u);
  for (std::size_t s = 0; s < a.size(); ++s) {
    EXPECT_EQ(a[s].label, c[s].label);
    // Gram matrices of [points; normals] are pose invariant.
    for (const auto* other : {&b[s], &c[s]}) {
      Eigen::MatrixXd pa(64, 3), pb(64, 3);
      pa << a[s].points, a[s].normals;
      pb << other->points, other->normals;
      EXPECT_LT((pa * pa.transpose() - pb * pb.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_LT((a[s].points.col(2) - b[s].points.col(2)).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(parse_rotation_mode("xyz"), ArgumentError);
  EXPECT_EQ(parse_rotation_mode("so3"), RotationMode::so3);
}

TEST(Shapes, NoiseMovesPointsButNotNormals) {
  const DatasetFile clean = gen_shapes(5, {2, 16, 0.0, RotationMode::none});
  const DatasetFile noisy = gen_shapes(5, {2, 16, 0.05, RotationMode::none});
  EXPECT_EQ(clean.get("normals").values, noisy.get("normals").values);
  EXPECT_NE(clean.get("points").values, noisy.get("points").values);
}

class DatasetFileTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("orientmp_unit_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  static DatasetFile sample() {
    DatasetFile f;
    f.kind = DatasetKind::shapes;
    f.seed = 42;
    f.metadata = R"({"k":1})";
    f.add("a", {2, 2}, {1.0, -0.0, 3.5, 1e-300});
    f.add("b", {3}, {std::nan(""), INFINITY, -2.0});
    return f;
  }

  std::filesystem::path dir_;
};

TEST_F(DatasetFileTest, RoundTripIsBitwise) {
  const DatasetFile f = sample();
  write_dataset(f, dir_ / "x.omp");
  const DatasetFile g = read_dataset(dir_ / "x.omp");
  EXPECT_EQ(serialize_dataset(g), serialize_dataset(f));
  EXPECT_EQ(g.kind, DatasetKind::shapes);
  EXPECT_EQ(g.seed, 42u);
  EXPECT_EQ(g.metadata, f.metadata);
  EXPECT_TRUE(std::signbit(g.get("a").values[1]));
  EXPECT_THROW(g.get("missing"), ConfigError);
}

TEST_F(DatasetFileTest, HeaderLayout) {
  const std::string bytes = serialize_dataset(sample());
  EXPECT_EQ(bytes.substr(0, 4), "OMPD");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), static_cast<unsigned char>(DatasetKind::shapes));
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 42);
}

TEST_F(DatasetFileTest, CorruptedMagicNamesOffsetZero) {
  std::string bytes = serialize_dataset(sample());
  bytes[0] = 'X';
  try {
    parse_dataset(bytes);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST_F(DatasetFileTest, TruncatedPayloadReportsLengths) {
  std::string bytes = serialize_dataset(sample());
  bytes.resize(bytes.size() - 5);
  try {
    parse_dataset(bytes);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 56"), std::string::npos) << msg;
    EXPECT_NE(msg.find("actual 51"), std::string::npos) << msg;
  }
}

TEST_F(DatasetFileTest, BadVersionAndMissingFile) {
  std::string bytes = serialize_dataset(sample());
  bytes[4] = 9;
  EXPECT_THROW(parse_dataset(bytes), FormatError);
  EXPECT_THROW(read_dataset(dir_ / "absent.omp"), IoError);
  EXPECT_THROW(parse_dataset("OMP"), FormatError);
}

}  // namespace
}  // namespace orientmp
