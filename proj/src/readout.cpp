#include "orientmp/readout.hpp"

namespace orientmp {

Pool parse_pool(const std::string& s) {
  if (s == "mean") return Pool::mean;
  if (s == "max") return Pool::max;
  throw ConfigError("unknown pooling '" + s + "' (expected mean, max)");
}

std::string to_string(Pool pool) { return pool == Pool::mean ? "mean" : "max"; }

Tensor invariant_pointwise(const HeadParams& head, const Tensor& features) {
  if (features.rank() != 2) throw ShapeError("invariant_pointwise: expected [N, d], got " + to_string(features.shape()));
  return head(features);
}

Tensor invariant_global(const HeadParams& head, const Tensor& features, Pool pool) {
  if (features.rank() != 2) throw ShapeError("invariant_global: expected [N, d], got " + to_string(features.shape()));
  if (features.shape()[0] == 0) throw ArgumentError("invariant_global: empty cloud");
  const Tensor pooled = pool == Pool::mean ? mean(features, 0) : max(features, 0);
  return reshape(head(reshape(pooled, {1, pooled.numel()})), {head.out_features()});
}

Tensor apply_frames(const OrientationSet& frames, const Tensor& vectors) {
  const std::size_t n = frames.size();
  if (vectors.shape() != Shape{n, 3}) {
    throw ShapeError("apply_frames: expected [" + std::to_string(n) + ", 3], got " + to_string(vectors.shape()));
  }
  return reshape(matmul(frames.frames, reshape(vectors, {n, 3, 1})), {n, 3});
}

Tensor equivariant_head(const HeadParams& head, const Tensor& features, const OrientationSet& frames,
                        bool apply) {
  if (head.out_features() != 3) throw ConfigError("equivariant_head: head must emit 3 values per point");
  if (features.rank() != 2 || features.shape()[0] != frames.size()) {
    throw ShapeError("equivariant_head: features " + to_string(features.shape()) + " do not match " +
                     std::to_string(frames.size()) + " frames");
  }
  const Tensor p = head(features);
  return apply ? apply_frames(frames, p) : p;
}

Tensor normalize_rows(const Tensor& x, double eps) {
  const Shape& s = x.shape();
  Shape keep = s;
  keep.back() = 1;
  return div(x, reshape(l2_norm_rows(x, eps), keep));
}

}  // namespace orientmp
