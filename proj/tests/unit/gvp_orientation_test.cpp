#include <gtest/gtest.h>

#include "orientmp/gvp.hpp"
#include "orientmp/orientation.hpp"
#include "unit/test_util.hpp"

namespace orientmp {
namespace {

using testing::gradient_error;
using testing::max_abs_diff;
using testing::probe;
using testing::random_points;
using testing::random_tensor;

/// Rotates every 3-vector along the last axis: v -> R v.
Tensor rotate_vectors(const Tensor& v, const Mat3& r) {
  return matmul(v, Tensor::from_data({3, 3}, {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1), r(0, 2),
                                              r(1, 2), r(2, 2)}));
}

double frames_deviation(const OrientationSet& a, const OrientationSet& b, const Mat3& r) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (b.frame(i) - r * a.frame(i)).cwiseAbs().maxCoeff());
  return m;
}

TEST(Gvp, ScalarsInvariantAndVectorsEquivariant) {
  Rng rng(1);
  const GvpParams p = GvpParams::init({5, 4, 6, 3}, rng);
  const Tensor s = random_tensor({10, 5}, rng, false);
  const Tensor v = random_tensor({10, 4, 3}, rng, false);
  const Mat3 r = sample_rotation(rng).rotation;
  const FeaturePair a = gvp_forward(p, s, v);
  const FeaturePair b = gvp_forward(p, s, rotate_vectors(v, r));
  EXPECT_EQ(a.scalars.shape(), (Shape{10, 6}));
  EXPECT_EQ(a.vectors.shape(), (Shape{10, 3, 3}));
  EXPECT_LT(max_abs_diff(a.scalars, b.scalars), 1e-12);
  EXPECT_LT(max_abs_diff(rotate_vectors(a.vectors, r), b.vectors), 1e-12);
  EXPECT_THROW(gvp_forward(p, random_tensor({10, 4}, rng, false), v), ShapeError);
}

TEST(Gvp, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  const GvpParams p = GvpParams::init({3, 2, 4, 2}, rng);
  const Tensor s = random_tensor({5, 3}, rng);
  const Tensor v = random_tensor({5, 2, 3}, rng);
  ParamList params;
  p.collect(params, "gvp");
  std::vector<Tensor> inputs{s, v};
  for (const auto& np : params) inputs.push_back(np.tensor);
  auto loss = [&] {
    const FeaturePair f = gvp_forward(p, s, v);
    return add(probe(f.scalars, 3), probe(f.vectors, 4));
  };
  EXPECT_LT(gradient_error(loss, inputs), 1e-5);
}

TEST(VGConv, RigidEquivarianceAndPermutationEquivariance) {
  Rng rng(3);
  const VGConvLayer layer = VGConvLayer::init({4, 2, 4, 2}, rng);
  const Points x = random_points(rng, 20);
  const FeaturePair f{random_tensor({20, 4}, rng, false), random_tensor({20, 2, 3}, rng, false)};
  const FeaturePair out = v_gconv_forward(layer, x, knn(x, 5), f);

  const RigidTransform g = sample_rigid(rng);
  const Points gx = apply(g, x);
  const FeaturePair gf{f.scalars, rotate_vectors(f.vectors, g.rotation)};
  const FeaturePair gout = v_gconv_forward(layer, gx, knn(gx, 5), gf);
  EXPECT_LT(max_abs_diff(out.scalars, gout.scalars), 1e-12);
  EXPECT_LT(max_abs_diff(rotate_vectors(out.vectors, g.rotation), gout.vectors), 1e-12);

  std::vector<std::int64_t> perm(20);
  for (std::size_t i = 0; i < 20; ++i) perm[i] = static_cast<std::int64_t>((i * 7 + 3) % 20);
  const IndexTensor pidx{{20}, perm};
  Points px(20, 3);
  for (Eigen::Index i = 0; i < 20; ++i) px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  const FeaturePair pf{gather_rows(f.scalars, pidx), gather_rows(f.vectors, pidx)};
  const FeaturePair pout = v_gconv_forward(layer, px, knn(px, 5), pf);
  EXPECT_LT(max_abs_diff(gather_rows(out.scalars, pidx), pout.scalars), 1e-12);
}

TEST(VGConv, StackRejectsMismatchedInitialFeatures) {
  Rng rng(4);
  const auto stack = init_v_gconv_stack({2, 8, 3, 2}, rng);
  const Points x = random_points(rng, 12);
  const FeaturePair out = v_gconv_stack(stack, x, knn(x, 4));
  EXPECT_EQ(out.vectors.shape(), (Shape{12, 2, 3}));
  EXPECT_THROW(v_gconv_stack(stack, x, knn(x, 4), FeaturePair::zeros(12, 3, 3)), ShapeError);
}

TEST(Orientation, FramesAreEquivariantAndOrthonormal) {
  Rng rng(5);
  const OrientationNet net = OrientationNet::init({3, 16, 4, 8, 1}, rng);
  for (int trial = 0; trial < 5; ++trial) {
    const Points x = random_points(rng, 40);
    const RigidTransform g = sample_rigid(rng);
    const Points gx = apply(g, x);
    const OrientationSet a = learn_orientations(net, x, knn(x, 8));
    const OrientationSet b = learn_orientations(net, gx, knn(gx, 8));
    EXPECT_LT(frames_deviation(a, b, g.rotation), 1e-10);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Mat3 f = a.frame(i);
      EXPECT_LT((f.transpose() * f - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_NEAR(f.determinant(), 1.0, 1e-12);
    }
  }
}

TEST(Orientation, MultipleFramesPerPoint) {
  Rng rng(6);
  const OrientationNet net = OrientationNet::init({2, 8, 4, 6, 3}, rng);
  const Points x = random_points(rng, 20);
  const OrientationOutput out = learn_orientation_frames(net, x, knn(x, 6));
  ASSERT_EQ(out.frames.size(), 3u);
  EXPECT_GT(max_abs_diff(out.frames[0].frames, out.frames[1].frames), 1e-3);
}

TEST(Orientation, GradientsReachEveryParameter) {
  Rng rng(7);
  const OrientationNet net = OrientationNet::init({2, 6, 3, 5, 1}, rng);
  const Points x = random_points(rng, 12);
  const KnnGraph g = knn(x, 5);
  ParamList params;
  net.collect(params, "orient");
  std::vector<Tensor> inputs;
  for (const auto& p : params) inputs.push_back(p.tensor);
  EXPECT_LT(gradient_error([&] { return probe(learn_orientations(net, x, g).frames); }, inputs), 1e-4);
}

TEST(GlobalOrientation, LevelSizes) {
  EXPECT_EQ(default_level_sizes(128, 2), (std::vector<std::size_t>{32, 8, 1}));
  EXPECT_EQ(default_level_sizes(5, 2), (std::vector<std::size_t>{1, 1, 1}));
}

TEST(GlobalOrientation, FrameIsEquivariantAndCentroidCovariant) {
  Rng rng(8);
  const GlobalOrientationNet net = GlobalOrientationNet::init({2, 8, 4, 8}, rng);
  const Points x = random_points(rng, 64);
  const RigidTransform g = sample_rigid(rng);
  const GlobalFrame a = learn_global_orientation(net, x);
  const GlobalFrame b = learn_global_orientation(net, apply(g, x));
  EXPECT_LT(frames_deviation(a.frame, b.frame, g.rotation), 1e-10);
  EXPECT_LT((b.centroid - g * a.centroid).norm(), 1e-12);
  EXPECT_THROW(learn_global_orientation(net, x, {16, 1}), ConfigError);
}

}  // namespace
}  // namespace orientmp
