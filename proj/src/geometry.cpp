#include "orientmp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace orientmp {

namespace {


Vec3 cross3(const Vec3& a, const Vec3& b) { return a.cross(b); }

/// Indices of the k smallest (distance, index) pairs.
void k_smallest(std::vector<std::pair<double, std::int64_t>>& cand, std::size_t k, std::int64_t* out) {
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
  for (std::size_t j = 0; j < k; ++j) out[j] = cand[j].second;
}

template <class DistFn>
KnnGraph knn_impl(std::size_t n_queries, std::size_t n_refs, std::size_t k, bool exclude_self, DistFn dist) {
  KnnGraph g;
  g.k = k;
  g.idx.shape = {n_queries, k};
  g.idx.data.resize(n_queries * k);
  std::vector<std::pair<double, std::int64_t>> cand;
  cand.reserve(n_refs);
  for (std::size_t i = 0; i < n_queries; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n_refs; ++j) {
      if (exclude_self && i == j) continue;
      cand.emplace_back(dist(i, j), static_cast<std::int64_t>(j));
    }
    k_smallest(cand, k, g.idx.data.data() + i * k);
  }
  return g;
}

}  // namespace

Tensor points_to_tensor(const Points& points) {
  const auto n = static_cast<std::size_t>(points.rows());
  return Tensor::from_data({n, 3}, std::vector<double>(points.data(), points.data() + n * 3));
}

Points tensor_to_points(const Tensor& t) {
  if (t.rank() != 2 || t.shape()[1] != 3) throw ShapeError("expected [N, 3] tensor, got " + to_string(t.shape()));
  Points p(static_cast<Eigen::Index>(t.shape()[0]), 3);
  std::copy(t.data().begin(), t.data().end(), p.data());
  return p;
}

Tensor PointCloud::coords() const { return points_to_tensor(points); }

Mat3 OrientationSet::frame(std::size_t i) const {
  if (i >= size()) throw IndexError("frame index out of range");
  Mat3 m;
  const double* p = frames.data().data() + i * 9;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = p[r * 3 + c];
  }
  return m;
}

Mat3 rotation_from_quaternion(double w, double x, double y, double z) {
  Eigen::Quaterniond q(w, x, y, z);
  q.normalize();
  return q.toRotationMatrix();
}

Mat3 rotation_z(double theta) { return Eigen::AngleAxisd(theta, Vec3::UnitZ()).toRotationMatrix(); }

RigidTransform sample_rotation(Rng& rng) {
  double q[4];
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& c : q) {
      c = rng.normal();
      norm2 += c * c;
    }
  } while (norm2 < 1e-12);
  return {rotation_from_quaternion(q[0], q[1], q[2], q[3]), Vec3::Zero()};
}

RigidTransform sample_rotation_z(Rng& rng) {
  return {rotation_z(rng.uniform(0.0, 2.0 * std::numbers::pi)), Vec3::Zero()};
}

RigidTransform sample_rigid(Rng& rng, double translation_scale) {
  RigidTransform g = sample_rotation(rng);
  for (int i = 0; i < 3; ++i) g.translation[i] = translation_scale * rng.normal();
  return g;
}

Points apply(const RigidTransform& g, const Points& points) {
  Points out(points.rows(), 3);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out.row(i) = (g.rotation * points.row(i).transpose() + g.translation).transpose();
  }
  return out;
}

PointCloud apply(const RigidTransform& g, const PointCloud& cloud) {
  PointCloud out = cloud;
  out.points = apply(g, cloud.points);
  if (cloud.normals.rows() > 0) out.normals = (cloud.normals * g.rotation.transpose()).eval();
  if (cloud.velocities.rows() > 0) out.velocities = (cloud.velocities * g.rotation.transpose()).eval();
  return out;
}

KnnGraph knn(const Points& points, std::size_t k) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k < 1 || k >= n) {
    throw ArgumentError("knn: need 1 <= k < N, got k=" + std::to_string(k) + ", N=" + std::to_string(n));
  }
  return knn_impl(n, n, k, true, [&](std::size_t i, std::size_t j) {
    return (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).squaredNorm();
  });
}

KnnGraph knn_between(const Points& queries, const Points& refs, std::size_t k) {
  const auto nr = static_cast<std::size_t>(refs.rows());
  if (k < 1 || k > nr) {
    throw ArgumentError("knn_between: need 1 <= k <= refs, got k=" + std::to_string(k) + ", refs=" +
                        std::to_string(nr));
  }
  return knn_impl(static_cast<std::size_t>(queries.rows()), nr, k, false, [&](std::size_t i, std::size_t j) {
    return (queries.row(static_cast<Eigen::Index>(i)) - refs.row(static_cast<Eigen::Index>(j))).squaredNorm();
  });
}

KnnGraph knn_features(const Tensor& features, std::size_t k) {
  if (features.rank() != 2) throw ShapeError("knn_features: expected [N, d], got " + to_string(features.shape()));
  const std::size_t n = features.shape()[0];
  const std::size_t d = features.shape()[1];
  if (k < 1 || k >= n) {
    throw ArgumentError("knn_features: need 1 <= k < N, got k=" + std::to_string(k) + ", N=" + std::to_string(n));
  }
  const double* h = features.data().data();
  return knn_impl(n, n, k, true, [&](std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = h[i * d + c] - h[j * d + c];
      acc += diff * diff;
    }
    return acc;
  });
}

std::vector<std::size_t> fps(const Points& points, std::size_t m) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (m < 1 || m > n) {
    throw ArgumentError("fps: need 1 <= m <= N, got m=" + std::to_string(m) + ", N=" + std::to_string(n));
  }
  const Eigen::RowVector3d centroid = points.colwise().mean();
  std::size_t seed = 0;
  double best = (points.row(0) - centroid).squaredNorm();
  for (std::size_t i = 1; i < n; ++i) {
    const double d = (points.row(static_cast<Eigen::Index>(i)) - centroid).squaredNorm();
    if (d < best) {
      best = d;
      seed = i;
    }
  }

  std::vector<std::size_t> picked{seed};
  picked.reserve(m);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t last = seed;
  while (picked.size() < m) {
    std::size_t arg = 0;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(last))).squaredNorm();
      nearest[i] = std::min(nearest[i], d);
      if (nearest[i] > far) {
        far = nearest[i];
        arg = i;
      }
    }
    picked.push_back(arg);
    last = arg;
  }
  return picked;
}

// ---------------------------------------------------------------------------
// Differentiable frame construction

OrientationSet gram_schmidt(const Tensor& v1, const Tensor& v2, FrameConstruction mode) {
  if (v1.rank() != 2 || v1.shape()[1] != 3 || v1.shape() != v2.shape()) {
    throw ShapeError("gram_schmidt: expected two [N, 3] tensors, got " + to_string(v1.shape()) + " and " +
                     to_string(v2.shape()));
  }
  const std::size_t n = v1.shape()[0];

  struct RowState {
    Vec3 u1, u2, v2;
    double n1 = 1.0, n2 = 1.0, proj = 0.0;
    bool fixed_u1 = false, fixed_u2 = false;
  };
  std::vector<RowState> rows(n);
  std::vector<double> out(n * 9);
  const double* a = v1.data().data();
  const double* b = v2.data().data();

  for (std::size_t i = 0; i < n; ++i) {
    RowState& s = rows[i];
    const Vec3 x(a[i * 3], a[i * 3 + 1], a[i * 3 + 2]);
    const Vec3 y(b[i * 3], b[i * 3 + 1], b[i * 3 + 2]);
    s.v2 = y;
    Vec3 c1, c2;
    if (mode == FrameConstruction::unnormalized) {
      c1 = x;
      c2 = y;
    } else {
      s.n1 = x.norm();
      if (s.n1 < kGramSchmidtDegeneracy) {
        s.fixed_u1 = true;
        s.u1 = Vec3::UnitX();
      } else {
        s.u1 = x / s.n1;
      }
      s.proj = y.dot(s.u1);
      const Vec3 rem = y - s.proj * s.u1;
      s.n2 = rem.norm();
      if (s.n2 < kGramSchmidtDegeneracy) {
        s.fixed_u2 = true;
        Vec3 alt = Vec3::UnitY() - s.u1.y() * s.u1;
        if (alt.norm() < kGramSchmidtDegeneracy) alt = Vec3::UnitZ() - s.u1.z() * s.u1;
        s.u2 = alt.normalized();
      } else {
        s.u2 = rem / s.n2;
      }
      c1 = s.u1;
      c2 = s.u2;
    }
    s.u1 = c1;
    s.u2 = c2;
    const Vec3 c3 = cross3(c1, c2);
    double* o = out.data() + i * 9;
    for (int r = 0; r < 3; ++r) {
      o[r * 3 + 0] = c1[r];
      o[r * 3 + 1] = c2[r];
      o[r * 3 + 2] = c3[r];
    }
  }

  Tensor frames = make_op(
      "gram_schmidt", {n, 3, 3}, std::move(out), {v1, v2},
      [mode, rows = std::move(rows)](const TensorImpl& o, std::span<const std::shared_ptr<TensorImpl>> ins) {
        auto& in1 = *ins[0];
        auto& in2 = *ins[1];
        double* g1 = in1.requires_grad ? in1.grad_buffer().data() : nullptr;
        double* g2 = in2.requires_grad ? in2.grad_buffer().data() : nullptr;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const RowState& s = rows[i];
          const double* g = o.grad.data() + i * 9;
          Vec3 d1(g[0], g[3], g[6]);
          Vec3 d2(g[1], g[4], g[7]);
          const Vec3 d3(g[2], g[5], g[8]);
          // c3 = c1 x c2
          d1 += s.u2.cross(d3);
          d2 += d3.cross(s.u1);
          Vec3 dv1 = Vec3::Zero();
          Vec3 dv2 = Vec3::Zero();
          if (mode == FrameConstruction::unnormalized) {
            dv1 = d1;
            dv2 = d2;
          } else {
            if (!s.fixed_u2) {
              // u2 = rem / |rem|, rem = v2 - <v2, u1> u1
              const Vec3 drem = (d2 - s.u2 * s.u2.dot(d2)) / s.n2;
              dv2 = drem - s.u1 * s.u1.dot(drem);
              d1 += -s.proj * drem - s.u1.dot(drem) * s.v2;
            }
            if (!s.fixed_u1) dv1 = (d1 - s.u1 * s.u1.dot(d1)) / s.n1;
          }
          for (int c = 0; c < 3; ++c) {
            if (g1) g1[i * 3 + c] += dv1[c];
            if (g2) g2[i * 3 + c] += dv2[c];
          }
        }
      });
  return OrientationSet{std::move(frames)};
}

Tensor cross(const Tensor& u, const Tensor& w) {
  if (u.shape() != w.shape() || u.rank() < 1 || u.shape().back() != 3) {
    throw ShapeError("cross: expected matching [..., 3] tensors, got " + to_string(u.shape()) + " and " +
                     to_string(w.shape()));
  }
  const std::size_t rows = u.numel() / 3;
  const double* a = u.data().data();
  const double* b = w.data().data();
  std::vector<double> out(u.numel());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = a + i * 3;
    const double* y = b + i * 3;
    out[i * 3 + 0] = x[1] * y[2] - x[2] * y[1];
    out[i * 3 + 1] = x[2] * y[0] - x[0] * y[2];
    out[i * 3 + 2] = x[0] * y[1] - x[1] * y[0];
  }
  return make_op("cross", u.shape(), std::move(out), {u, w},
                 [rows](const TensorImpl& o, std::span<const std::shared_ptr<TensorImpl>> ins) {
                   auto& ui = *ins[0];
                   auto& wi = *ins[1];
                   for (std::size_t i = 0; i < rows; ++i) {
                     const Vec3 g(o.grad[i * 3], o.grad[i * 3 + 1], o.grad[i * 3 + 2]);
                     const Vec3 x(ui.data[i * 3], ui.data[i * 3 + 1], ui.data[i * 3 + 2]);
                     const Vec3 y(wi.data[i * 3], wi.data[i * 3 + 1], wi.data[i * 3 + 2]);
                     if (ui.requires_grad) {
                       const Vec3 dx = y.cross(g);
                       for (int c = 0; c < 3; ++c) ui.grad_buffer()[i * 3 + c] += dx[c];
                     }
                     if (wi.requires_grad) {
                       const Vec3 dy = g.cross(x);
                       for (int c = 0; c < 3; ++c) wi.grad_buffer()[i * 3 + c] += dy[c];
                     }
                   }
                 });
}

Tensor project_to_frames(const OrientationSet& frames, const Tensor& r) {
  if (r.rank() != 3 || r.shape()[2] != 3 || r.shape()[0] != frames.size()) {
    throw ShapeError("project_to_frames: expected [N, k, 3] offsets for " + std::to_string(frames.size()) +
                     " frames, got " + to_string(r.shape()));
  }
  // Row form: (O^T r)^T = r^T O.
  return matmul(r, frames.frames);
}

}  // namespace orientmp
