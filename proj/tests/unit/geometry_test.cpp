#include "orientmp/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "unit/test_util.hpp"

namespace orientmp {
namespace {

using testing::gradient_error;
using testing::probe;
using testing::random_points;
using testing::random_tensor;

void expect_rotation(const Mat3& r, double tol = 1e-12) {
  EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), tol);
  EXPECT_NEAR(r.determinant(), 1.0, tol);
}

TEST(Geometry, SampledRotationsAreProperOrthogonal) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    expect_rotation(sample_rotation(rng).rotation);
    const Mat3 rz = sample_rotation_z(rng).rotation;
    expect_rotation(rz);
    EXPECT_NEAR(rz(2, 2), 1.0, 1e-15);
  }
  expect_rotation(rotation_from_quaternion(2.0, 0.3, -1.0, 0.5));
  EXPECT_LT((rotation_z(0.0) - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Geometry, RigidTransformComposition) {
  Rng rng(2);
  const RigidTransform a = sample_rigid(rng);
  const RigidTransform b = sample_rigid(rng);
  const Vec3 x(0.3, -1.2, 2.0);
  EXPECT_LT(((a * b) * x - a * (b * x)).norm(), 1e-12);
  EXPECT_LT((a.inverse() * (a * x) - x).norm(), 1e-12);
}

TEST(Geometry, ApplyRotatesNormalsAndVelocitiesButNotCharges) {
  Rng rng(3);
  PointCloud c;
  c.points = random_points(rng, 5);
  c.normals = random_points(rng, 5);
  c.velocities = random_points(rng, 5);
  c.charges = Eigen::VectorXd::Ones(5);
  const RigidTransform g = sample_rigid(rng);
  const PointCloud t = apply(g, c);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const Vec3 p = c.points.row(i).transpose();
    const Vec3 n = c.normals.row(i).transpose();
    EXPECT_LT((t.points.row(i).transpose() - g * p).norm(), 1e-12);
    EXPECT_LT((t.normals.row(i).transpose() - g.rotation * n).norm(), 1e-12);
  }
  EXPECT_EQ(t.charges, c.charges);
}

TEST(Geometry, KnnMatchesBruteForceSort) {
  Rng rng(4);
  const Points p = random_points(rng, 60);
  const std::size_t k = 7;
  const KnnGraph g = knn(p, k);
  ASSERT_EQ(g.idx.shape, (Shape{60, k}));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    std::vector<std::pair<double, Eigen::Index>> d;
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
      if (j != i) d.emplace_back((p.row(i) - p.row(j)).squaredNorm(), j);
    }
    std::sort(d.begin(), d.end());
    for (std::size_t c = 0; c < k; ++c) EXPECT_EQ(g.idx.at(i, c), d[c].second);
  }
}

TEST(Geometry, KnnBreaksTiesBySmallerIndex) {
  Points p(5, 3);
  p << 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, 0, 1;
  const KnnGraph g = knn(p, 4);
  EXPECT_EQ(g.idx.at(0, 0), 1);
  EXPECT_EQ(g.idx.at(0, 1), 2);
  EXPECT_EQ(g.idx.at(0, 2), 3);
  EXPECT_EQ(g.idx.at(0, 3), 4);
}

TEST(Geometry, KnnRejectsTooLargeK) {
  Rng rng(5);
  EXPECT_THROW(knn(random_points(rng, 4), 4), ArgumentError);
  EXPECT_THROW(knn(random_points(rng, 4), 0), ArgumentError);
}

TEST(Geometry, KnnBetweenIncludesCoincidentReference) {
  Rng rng(6);
  const Points refs = random_points(rng, 20);
  const Points queries = refs.topRows(3);
  const KnnGraph g = knn_between(queries, refs, 2);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g.idx.at(i, 0), static_cast<std::int64_t>(i));
}

TEST(Geometry, KnnFeaturesEqualsKnnOnCoordinates) {
  Rng rng(7);
  const Points p = random_points(rng, 30);
  EXPECT_EQ(knn_features(points_to_tensor(p), 5).idx.data, knn(p, 5).idx.data);
}

TEST(Geometry, FpsPicksDistinctSpreadPoints) {
  Rng rng(8);
  const Points p = random_points(rng, 100);
  const auto idx = fps(p, 10);
  ASSERT_EQ(idx.size(), 10u);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 10u);
  const Vec3 centroid = p.colwise().mean().transpose();
  Eigen::Index nearest = 0;
  (p.rowwise() - centroid.transpose()).rowwise().squaredNorm().minCoeff(&nearest);
  EXPECT_EQ(idx[0], static_cast<std::size_t>(nearest));
  // Each pick maximizes the distance to the already chosen set.
  for (std::size_t s = 1; s < idx.size(); ++s) {
    auto dist = [&](Eigen::Index j) {
      double best = 1e300;
      for (std::size_t t = 0; t < s; ++t) best = std::min(best, (p.row(j) - p.row(idx[t])).squaredNorm());
      return best;
    };
    for (Eigen::Index j = 0; j < p.rows(); ++j) EXPECT_LE(dist(j), dist(idx[s]) + 1e-15);
  }
  EXPECT_THROW(fps(p, 101), ArgumentError);
}

TEST(Geometry, GramSchmidtColumnsAreRightHandedOrthonormal) {
  Rng rng(9);
  const Tensor v1 = random_tensor({50, 3}, rng, false);
  const Tensor v2 = random_tensor({50, 3}, rng, false);
  const OrientationSet o = gram_schmidt(v1, v2);
  for (std::size_t i = 0; i < o.size(); ++i) {
    const Mat3 f = o.frame(i);
    expect_rotation(f, 1e-13);
    const Vec3 a(v1.at({i, 0}), v1.at({i, 1}), v1.at({i, 2}));
    EXPECT_LT((f.col(0) - a.normalized()).norm(), 1e-13);
  }
}

TEST(Geometry, GramSchmidtIsRotationEquivariant) {
  Rng rng(10);
  const Points a = random_points(rng, 20);
  const Points b = random_points(rng, 20);
  const Mat3 r = sample_rotation(rng).rotation;
  const RigidTransform g{r, Vec3::Zero()};
  const OrientationSet o = gram_schmidt(points_to_tensor(a), points_to_tensor(b));
  const OrientationSet ro = gram_schmidt(points_to_tensor(apply(g, a)), points_to_tensor(apply(g, b)));
  for (std::size_t i = 0; i < 20; ++i) EXPECT_LT((ro.frame(i) - r * o.frame(i)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Geometry, GramSchmidtDegenerateInputsFallBackToValidFrames) {
  const Tensor v1 = Tensor::from_data({4, 3}, {0, 0, 0, 1, 2, 3, 1e-9, 0, 0, 0, 0, 5});
  const Tensor v2 = Tensor::from_data({4, 3}, {1, 0, 0, 2, 4, 6, 0, 1, 0, 0, 0, 0});
  const OrientationSet o = gram_schmidt(v1, v2);
  for (std::size_t i = 0; i < 4; ++i) expect_rotation(o.frame(i), 1e-13);
  EXPECT_LT((o.frame(0).col(0) - Vec3::UnitX()).norm(), 1e-15);
}

TEST(Geometry, GramSchmidtGradientMatchesFiniteDifferences) {
  Rng rng(11);
  const Tensor v1 = random_tensor({6, 3}, rng);
  const Tensor v2 = random_tensor({6, 3}, rng);
  EXPECT_LT(gradient_error([&] { return probe(gram_schmidt(v1, v2).frames); }, {v1, v2}), 1e-6);
}

TEST(Geometry, UnnormalizedModeIsNotOrthonormal) {
  const Tensor v1 = Tensor::from_data({1, 3}, {2, 0, 0});
  const Tensor v2 = Tensor::from_data({1, 3}, {1, 1, 0});
  const Mat3 f = gram_schmidt(v1, v2, FrameConstruction::unnormalized).frame(0);
  EXPECT_GT((f.transpose() * f - Mat3::Identity()).cwiseAbs().maxCoeff(), 0.5);
}

TEST(Geometry, CrossProductAndGradient) {
  const Tensor ex = Tensor::from_data({1, 3}, {1, 0, 0});
  const Tensor ey = Tensor::from_data({1, 3}, {0, 1, 0});
  EXPECT_EQ(cross(ex, ey).to_vector(), (std::vector<double>{0, 0, 1}));
  Rng rng(12);
  const Tensor u = random_tensor({4, 3}, rng);
  const Tensor w = random_tensor({4, 3}, rng);
  EXPECT_LT(gradient_error([&] { return probe(cross(u, w)); }, {u, w}), 1e-6);
}

TEST(Geometry, ProjectToFramesComputesTransposedProduct) {
  Rng rng(13);
  const OrientationSet o = gram_schmidt(random_tensor({3, 3}, rng, false), random_tensor({3, 3}, rng, false));
  const Tensor r = random_tensor({3, 2, 3}, rng, false);
  const Tensor p = project_to_frames(o, r);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      const Vec3 v(r.at({i, j, 0}), r.at({i, j, 1}), r.at({i, j, 2}));
      const Vec3 expected = o.frame(i).transpose() * v;
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(p.at({i, j, c}), expected(static_cast<int>(c)), 1e-14);
    }
  }
  EXPECT_THROW(project_to_frames(o, Tensor::zeros({2, 2, 3})), ShapeError);
}

}  // namespace
}  // namespace orientmp
