#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstddef>
#include <vector>

#include "orientmp/rng.hpp"
#include "orientmp/tensor.hpp"

namespace orientmp {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Element (R, t) of SE(3); acts on points as x -> R x + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 operator*(const Vec3& x) const { return rotation * x + translation; }

  /// (this * other)(x) == this(other(x)).
  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  RigidTransform inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
};

/// Coordinates plus optional per-point attributes. Empty attribute matrices
/// mean "absent". Normals and velocities rotate with the cloud; charges and
/// the label are invariant.
struct PointCloud {
  Points points;
  Points normals;
  Points velocities;
  Eigen::VectorXd charges;
  int label = -1;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }

  /// Coordinates as an [N, 3] tensor (no gradient).
  Tensor coords() const;
};

Tensor points_to_tensor(const Points& points);
Points tensor_to_points(const Tensor& t);

/// k nearest neighbors of every point, self excluded; idx has shape [N, k].
struct KnnGraph {
  std::size_t k = 0;
  IndexTensor idx;

  std::size_t size() const { return idx.shape.empty() ? 0 : idx.shape[0]; }
};

/// Per-point right-handed orthonormal frames, shape [N, 3, 3]; column c of
/// frame i is the c-th learned axis.
struct OrientationSet {
  Tensor frames;

  std::size_t size() const { return frames.defined() ? frames.shape()[0] : 0; }
  Mat3 frame(std::size_t i) const;
};

Mat3 rotation_from_quaternion(double w, double x, double y, double z);
Mat3 rotation_z(double theta);

/// Uniform on SO(3) (normalized Gaussian quaternion), zero translation.
RigidTransform sample_rotation(Rng& rng);
/// Rotation about the z axis by an angle uniform on [0, 2*pi).
RigidTransform sample_rotation_z(Rng& rng);
/// Uniform rotation plus a Gaussian translation with the given scale.
RigidTransform sample_rigid(Rng& rng, double translation_scale = 1.0);

PointCloud apply(const RigidTransform& g, const PointCloud& cloud);
Points apply(const RigidTransform& g, const Points& points);

/// Exact brute-force kNN within one set; ties broken by smaller index.
KnnGraph knn(const Points& points, std::size_t k);
/// For each query, the k nearest reference points (no self exclusion).
KnnGraph knn_between(const Points& queries, const Points& refs, std::size_t k);
/// kNN among the rows of an [N, d] feature matrix, self excluded.
KnnGraph knn_features(const Tensor& features, std::size_t k);

/// Farthest-point sampling seeded at the point nearest the centroid.
std::vector<std::size_t> fps(const Points& points, std::size_t m);

enum class FrameConstruction {
  gram_schmidt,
  /// [v1, v2, v1 x v2] without normalization. Only used to show that the
  /// equivariance audit detects a broken frame constructor.
  unnormalized,
};

/// Orthonormal frames [u1, u2, u1 x u2] from two vector fields of shape [N, 3].
/// Differentiable in v1 and v2. Degenerate inputs fall back to fixed axes:
/// |v1| < 1e-6 uses e_x; a vanishing orthogonal remainder of v2 uses e_y (or
/// e_z) orthogonalized against u1. Substituted axes carry no gradient.
OrientationSet gram_schmidt(const Tensor& v1, const Tensor& v2,
                            FrameConstruction mode = FrameConstruction::gram_schmidt);

inline constexpr double kGramSchmidtDegeneracy = 1e-6;

/// Right-handed cross product over the last axis (extent 3).
Tensor cross(const Tensor& u, const Tensor& w);

/// O_i^T r for every row: frames [N, 3, 3], r [N, k, 3] -> [N, k, 3].
Tensor project_to_frames(const OrientationSet& frames, const Tensor& r);

}  // namespace orientmp
