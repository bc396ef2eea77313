#pragma once

#include <optional>
#include <vector>

#include "orientmp/geometry.hpp"
#include "orientmp/nn.hpp"

namespace orientmp {

/// Per-point scalar features [N, d] and vector features [N, m, 3].
struct FeaturePair {
  Tensor scalars;
  Tensor vectors;

  std::size_t size() const { return scalars.shape()[0]; }
  std::size_t scalar_channels() const { return scalars.shape()[1]; }
  std::size_t vector_channels() const { return vectors.shape()[1]; }

  static FeaturePair zeros(std::size_t n, std::size_t scalar_channels, std::size_t vector_channels);
};

struct GvpDims {
  std::size_t scalars_in = 0;
  std::size_t vectors_in = 0;
  std::size_t scalars_out = 0;
  std::size_t vectors_out = 0;
};

/// Geometric vector perceptron with vector gating.
///
///   V_h   = W_h V                       (channel mix, no bias)
///   s'    = relu(W_s [s, |V_h|] + b_s)
///   V_out = (W_mu V_h) * sigmoid(W_g s' + b_g)
///
/// Vector maps act on channels only, so V -> R V commutes with the layer.
struct GvpParams {
  GvpDims dims;
  Tensor w_h;   // [hidden, vectors_in]
  Tensor w_mu;  // [vectors_out, hidden]
  Linear scalar;
  Linear gate;

  std::size_t hidden() const { return w_h.shape()[0]; }

  static GvpParams init(const GvpDims& dims, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

FeaturePair gvp_forward(const GvpParams& p, const Tensor& scalars, const Tensor& vectors);

/// One V-GConv layer: an edge-message GVP with mean aggregation and a
/// feed-forward GVP, each wrapped in a residual add when widths allow.
struct VGConvLayer {
  GvpParams message;
  GvpParams update;

  std::size_t scalars_in() const { return message.dims.scalars_in - 1; }
  std::size_t vectors_in() const { return message.dims.vectors_in - 1; }
  std::size_t scalars_out() const { return message.dims.scalars_out; }
  std::size_t vectors_out() const { return message.dims.vectors_out; }

  static VGConvLayer init(const GvpDims& dims, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Message passing over a kNN graph within one point set. The message from j
/// to i sees [h_i, |x_i - x_j|] and [V_i, x_i - x_j].
FeaturePair v_gconv_forward(const VGConvLayer& layer, const Points& points, const KnnGraph& graph,
                            const FeaturePair& features);

/// Same layer where queries aggregate from a (possibly larger) reference set.
/// `graph` indexes `refs`; `query_features` are the queries' own features.
FeaturePair v_gconv_between(const VGConvLayer& layer, const Points& queries, const Points& refs,
                            const KnnGraph& graph, const FeaturePair& query_features);

struct VGConvStackConfig {
  std::size_t layers = 3;
  std::size_t scalar_channels = 32;
  std::size_t vector_channels = 8;
  /// Vector channels emitted by the last layer.
  std::size_t output_vectors = 2;
};

std::vector<VGConvLayer> init_v_gconv_stack(const VGConvStackConfig& cfg, Rng& rng);

/// Runs the stack from all-zero initial features (or `initial` if given).
FeaturePair v_gconv_stack(const std::vector<VGConvLayer>& layers, const Points& points, const KnnGraph& graph,
                          const std::optional<FeaturePair>& initial = std::nullopt);

}  // namespace orientmp
