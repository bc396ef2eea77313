#pragma once

#include "orientmp/geometry.hpp"
#include "orientmp/nn.hpp"

namespace orientmp {

enum class Pool { mean, max };

Pool parse_pool(const std::string& s);
std::string to_string(Pool pool);

/// affine -> relu -> affine readout.
using HeadParams = Mlp;

/// Per-point outputs from invariant features, [N, c].
Tensor invariant_pointwise(const HeadParams& head, const Tensor& features);

/// Pool over points (fixed index order), then the head: [c].
Tensor invariant_global(const HeadParams& head, const Tensor& features, Pool pool);

/// e_i = O_i p_i with p_i = head(h_i); [N, 3]. With `apply_frames` false the
/// raw p_i are returned, which the verification harness uses as a broken variant.
Tensor equivariant_head(const HeadParams& head, const Tensor& features, const OrientationSet& frames,
                        bool apply_frames = true);

/// Rotates per-point vectors p [N, 3] by their frames: O_i p_i.
Tensor apply_frames(const OrientationSet& frames, const Tensor& vectors);

/// Rows scaled to unit length with an eps-stabilized norm.
Tensor normalize_rows(const Tensor& x, double eps = 1e-8);

}  // namespace orientmp
