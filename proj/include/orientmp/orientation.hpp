#pragma once

#include <vector>

#include "orientmp/gvp.hpp"

namespace orientmp {

struct OrientationConfig {
  std::size_t layers = 3;
  std::size_t scalar_channels = 32;
  std::size_t vector_channels = 8;
  std::size_t k = 16;
  /// Independent frames per point; the last layer emits 2 vectors per frame.
  std::size_t frames = 1;
};

/// Point-wise orientation network: a V-GConv stack followed by Gram-Schmidt.
struct OrientationNet {
  OrientationConfig config;
  std::vector<VGConvLayer> layers;

  static OrientationNet init(const OrientationConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

struct OrientationOutput {
  std::vector<OrientationSet> frames;  // config.frames entries
  FeaturePair features;                // last-layer features
};

/// `initial` replaces the all-zero input features; it must match the first
/// layer's widths and transform like the cloud (scalars invariant, vectors rotating).
OrientationOutput learn_orientation_frames(const OrientationNet& net, const Points& points, const KnnGraph& graph,
                                           FrameConstruction mode = FrameConstruction::gram_schmidt,
                                           const std::optional<FeaturePair>& initial = std::nullopt);

/// The first frame set: O_i built from the two output vectors of point i.
OrientationSet learn_orientations(const OrientationNet& net, const Points& points, const KnnGraph& graph,
                                  FrameConstruction mode = FrameConstruction::gram_schmidt);

struct GlobalOrientationConfig {
  /// Number of V-GConv levels before pooling onto the centroid.
  std::size_t levels = 2;
  std::size_t scalar_channels = 32;
  std::size_t vector_channels = 8;
  std::size_t k = 16;
};

/// Separate parameters from the point-wise network.
struct GlobalOrientationNet {
  GlobalOrientationConfig config;
  std::vector<VGConvLayer> layers;

  static GlobalOrientationNet init(const GlobalOrientationConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

struct GlobalFrame {
  OrientationSet frame;  // a single [1, 3, 3] frame
  Vec3 centroid = Vec3::Zero();
};

/// [N/4, N/16, ...] down to one entry per level, then the final 1 (rounded, min 1).
std::vector<std::size_t> default_level_sizes(std::size_t n, std::size_t levels);

/// Hierarchical pooling onto the centroid. `level_sizes` must be strictly
/// decreasing, hold one entry per V-GConv level plus a trailing 1.
GlobalFrame learn_global_orientation(const GlobalOrientationNet& net, const Points& points,
                                     const std::vector<std::size_t>& level_sizes);
GlobalFrame learn_global_orientation(const GlobalOrientationNet& net, const Points& points);

}  // namespace orientmp
