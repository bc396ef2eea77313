#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "orientmp/orientation.hpp"

namespace orientmp {

enum class BackboneKind { generic, dgcnn, rscnn };
enum class Aggregation { max, mean, sum };

std::string to_string(BackboneKind kind);
std::string to_string(Aggregation agg);
BackboneKind parse_backbone_kind(const std::string& s);
Aggregation parse_aggregation(const std::string& s);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::dgcnn;
  std::vector<std::size_t> widths{64, 64};
  std::size_t k = 16;
  Aggregation agg = Aggregation::max;
  /// Frames per point used to project offsets (concatenated).
  std::size_t frames = 1;
  /// Feed O_glob^T (x_i - centroid) as invariant per-point input features.
  bool global_coords = false;
  /// DGCNN: rebuild the neighbor graph in feature space after the first layer.
  bool feature_knn = true;
};

/// Message and update networks for the configured layer stack, plus the
/// orientation networks that feed it.
struct BackboneParams {
  BackboneConfig config;
  OrientationNet orientation;
  std::optional<GlobalOrientationNet> global;
  std::size_t extra_inputs = 0;  // width of task-specific per-point inputs
  std::vector<Mlp> message;
  std::vector<Linear> lift;  // RS-CNN channel raising after each layer

  static BackboneParams init(const BackboneConfig& cfg, const OrientationConfig& orientation,
                             const GlobalOrientationConfig& global, std::size_t extra_inputs, Rng& rng);

  /// Width of h^0 as seen by the first layer.
  std::size_t input_width() const;
  std::size_t output_width() const { return config.widths.back(); }
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Switches used by the verification harness to build deliberately broken
/// variants; defaults give the real model.
struct BackboneOptions {
  bool identity_frames = false;
  FrameConstruction frame_mode = FrameConstruction::gram_schmidt;
  /// Task inputs computed from the learned frames, [N, extra_inputs].
  std::function<Tensor(const std::vector<OrientationSet>&)> extra_features;
  /// Initial features for the orientation network (task vectors such as velocities).
  std::optional<FeaturePair> orientation_inputs;
};

struct BackboneOutput {
  Tensor features;                  // h^(L), [N, d_out]
  std::vector<Tensor> layers;       // h^(1) .. h^(L)
  std::vector<OrientationSet> frames;
  std::optional<GlobalFrame> global;
  KnnGraph graph;
};

/// Neighbor offsets x_j - x_i as a constant [N, k, 3] tensor.
Tensor neighbor_offsets(const Points& points, const KnnGraph& graph);

/// Concatenation over frames of O_i^(f)T r_ij along the last axis: [N, k, 3F].
Tensor project_multi(const std::vector<OrientationSet>& frames, const Tensor& offsets);

/// h'_i = Agg_j H(h_i, h_j, O_i^T (x_j - x_i)).
Tensor oriented_mp_layer(const Mlp& h_net, Aggregation agg, const Tensor& h, const Points& points,
                         const KnnGraph& graph, const std::vector<OrientationSet>& frames);

/// h'_i = max_j M(|O_i^T r_ij|, O_i^T r_ij) * h_j.
Tensor rscnn_layer(const Mlp& m_net, const Tensor& h, const Points& points, const KnnGraph& graph,
                   const std::vector<OrientationSet>& frames);

/// h^1_i = max_j relu(M0(O_i^T (x_j - x_i), c_i)); c_i are optional per-point
/// invariant inputs (global canonical coordinates), width 0 when unused.
Tensor dgcnn_first_layer(const Mlp& m0, const Points& points, const KnnGraph& graph,
                         const std::vector<OrientationSet>& frames, const Tensor& point_inputs);

/// h'_i = max_j relu(M(h_j - h_i, h_i)) over a kNN graph rebuilt in feature space.
Tensor dgcnn_feature_layer(const Mlp& m_net, const Tensor& h, std::size_t k);
/// Same rule over a fixed graph.
Tensor dgcnn_feature_layer(const Mlp& m_net, const Tensor& h, const KnnGraph& graph);

/// Frames (or identity frames when requested), optional global frame, h^0,
/// then the configured layer stack.
BackboneOutput backbone_forward(const BackboneParams& params, const Points& points,
                                const BackboneOptions& options = {});

/// O_glob^T (x_i - centroid) for every point, [N, 3].
Tensor canonical_coordinates(const GlobalFrame& global, const Points& points);

OrientationSet identity_frames(std::size_t n);

}  // namespace orientmp
