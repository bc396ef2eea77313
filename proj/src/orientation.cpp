#include "orientmp/orientation.hpp"

#include <algorithm>
#include <cmath>

namespace orientmp {

OrientationNet OrientationNet::init(const OrientationConfig& cfg, Rng& rng) {
  if (cfg.frames == 0) throw ConfigError("orientation: frames must be >= 1");
  if (cfg.k == 0) throw ConfigError("orientation: k must be >= 1");
  OrientationNet net;
  net.config = cfg;
  net.layers = init_v_gconv_stack({cfg.layers, cfg.scalar_channels, cfg.vector_channels, 2 * cfg.frames}, rng);
  return net;
}

void OrientationNet::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(out, prefix + ".layers." + std::to_string(l));
}

OrientationOutput learn_orientation_frames(const OrientationNet& net, const Points& points, const KnnGraph& graph,
                                           FrameConstruction mode, const std::optional<FeaturePair>& initial) {
  if (net.layers.empty() || net.layers.back().vectors_out() != 2 * net.config.frames) {
    throw ConfigError("orientation: last layer must emit 2 vectors per frame");
  }
  OrientationOutput out;
  out.features = v_gconv_stack(net.layers, points, graph, initial);
  const std::size_t n = points.rows();
  for (std::size_t f = 0; f < net.config.frames; ++f) {
    const Tensor v1 = reshape(slice(out.features.vectors, 1, 2 * f, 1), {n, 3});
    const Tensor v2 = reshape(slice(out.features.vectors, 1, 2 * f + 1, 1), {n, 3});
    out.frames.push_back(gram_schmidt(v1, v2, mode));
  }
  return out;
}

OrientationSet learn_orientations(const OrientationNet& net, const Points& points, const KnnGraph& graph,
                                  FrameConstruction mode) {
  return learn_orientation_frames(net, points, graph, mode).frames.front();
}

GlobalOrientationNet GlobalOrientationNet::init(const GlobalOrientationConfig& cfg, Rng& rng) {
  if (cfg.k == 0) throw ConfigError("global orientation: k must be >= 1");
  GlobalOrientationNet net;
  net.config = cfg;
  if (cfg.levels > 0) net.layers = init_v_gconv_stack({cfg.levels, cfg.scalar_channels, cfg.vector_channels, 2}, rng);
  return net;
}

void GlobalOrientationNet::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(out, prefix + ".layers." + std::to_string(l));
}

std::vector<std::size_t> default_level_sizes(std::size_t n, std::size_t levels) {
  std::vector<std::size_t> sizes;
  double size = static_cast<double>(n);
  for (std::size_t l = 0; l < levels; ++l) {
    size /= 4.0;
    sizes.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(size))));
  }
  sizes.push_back(1);
  return sizes;
}

GlobalFrame learn_global_orientation(const GlobalOrientationNet& net, const Points& points,
                                     const std::vector<std::size_t>& level_sizes) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n == 0) throw ArgumentError("global orientation: empty cloud");
  if (level_sizes.size() != net.layers.size() + 1 || level_sizes.back() != 1) {
    throw ConfigError("global orientation: expected " + std::to_string(net.layers.size()) +
                      " level sizes followed by 1");
  }
  for (std::size_t l = 0; l < level_sizes.size(); ++l) {
    const std::size_t prev = l == 0 ? n : level_sizes[l - 1];
    const bool ok = l == 0 ? level_sizes[0] >= 1 && level_sizes[0] <= n : level_sizes[l] < prev;
    if (!ok) throw ConfigError("global orientation: level sizes must be strictly decreasing and fit the cloud");
  }

  const std::size_t d = net.config.scalar_channels;
  const std::size_t m = net.layers.empty() ? 2 : net.config.vector_channels;
  Points current = points;
  FeaturePair f = FeaturePair::zeros(n, d, m);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto picked = fps(current, level_sizes[l]);
    Points queries(static_cast<Eigen::Index>(picked.size()), 3);
    IndexTensor sel{{picked.size()}, {}};
    for (std::size_t i = 0; i < picked.size(); ++i) {
      queries.row(static_cast<Eigen::Index>(i)) = current.row(static_cast<Eigen::Index>(picked[i]));
      sel.data.push_back(static_cast<std::int64_t>(picked[i]));
    }
    const std::size_t k = std::min<std::size_t>(net.config.k, static_cast<std::size_t>(current.rows()));
    const KnnGraph graph = knn_between(queries, current, k);
    const FeaturePair fq{gather_rows(f.scalars, sel), gather_rows(f.vectors, sel)};
    f = v_gconv_between(net.layers[l], queries, current, graph, fq);
    current = std::move(queries);
  }

  const Tensor pooled = mean(f.vectors, 0);  // [2, 3]
  GlobalFrame out;
  out.frame = gram_schmidt(reshape(slice(pooled, 0, 0, 1), {1, 3}), reshape(slice(pooled, 0, 1, 1), {1, 3}));
  out.centroid = points.colwise().mean().transpose();
  return out;
}

GlobalFrame learn_global_orientation(const GlobalOrientationNet& net, const Points& points) {
  return learn_global_orientation(net, points, default_level_sizes(static_cast<std::size_t>(points.rows()),
                                                                   net.layers.size()));
}

}  // namespace orientmp
