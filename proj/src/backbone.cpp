#include "orientmp/backbone.hpp"

namespace orientmp {

namespace {

ReduceKind reduce_kind(Aggregation agg) {
  switch (agg) {
    case Aggregation::max: return ReduceKind::max;
    case Aggregation::mean: return ReduceKind::mean;
    case Aggregation::sum: return ReduceKind::sum;
  }
  return ReduceKind::max;
}

void check_rows(const Tensor& h, std::size_t n, const char* where) {
  if (h.rank() != 2 || h.shape()[0] != n) {
    throw ShapeError(std::string(where) + ": expected [" + std::to_string(n) + ", d] features, got " +
                     to_string(h.shape()));
  }
}

/// Input block of an edge MLP: per-edge values [N, k, d], or per-point values
/// [N, d] read at the neighbor j or at the center i.
struct EdgePart {
  enum Kind { edge, neighbor, center } kind;
  Tensor values;
};

/// first(concat(parts)) evaluated blockwise: point-wise blocks go through the
/// weights once per point and are gathered afterwards, so the N*k
/// concatenation is never built.
Tensor split_affine(const Linear& lin, const std::vector<EdgePart>& parts, const KnnGraph& graph) {
  const std::size_t n = graph.size();
  const std::size_t k = graph.k;
  const std::size_t w = lin.out_features();
  Tensor per_edge;
  Tensor per_center;
  std::size_t offset = 0;
  auto accumulate = [](Tensor& acc, const Tensor& t) { acc = acc.defined() ? add(acc, t) : t; };
  for (const auto& part : parts) {
    const std::size_t d = part.values.shape().back();
    if (d == 0) continue;
    const Tensor weight = slice(lin.weight, 0, offset, d);
    offset += d;
    switch (part.kind) {
      case EdgePart::edge:
        accumulate(per_edge, reshape(matmul(reshape(part.values, {n * k, d}), weight), {n, k, w}));
        break;
      case EdgePart::neighbor:
        accumulate(per_edge, gather_rows(matmul(part.values, weight), graph.idx));
        break;
      case EdgePart::center:
        accumulate(per_center, matmul(part.values, weight));
        break;
    }
  }
  if (offset != lin.in_features()) {
    throw ShapeError("edge MLP expects " + std::to_string(lin.in_features()) + " inputs, got " + std::to_string(offset));
  }
  if (!per_edge.defined()) per_edge = Tensor::zeros({n, k, w});
  Tensor center = per_center.defined() ? add(per_center, lin.bias) : reshape(lin.bias, {1, w});
  return add(per_edge, reshape(center, {center.shape()[0], 1, w}));
}

Tensor edge_mlp(const Mlp& net, const std::vector<EdgePart>& parts, const KnnGraph& graph) {
  return net.second(relu(split_affine(net.first, parts, graph)));
}

}  // namespace

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::generic: return "generic";
    case BackboneKind::dgcnn: return "dgcnn";
    case BackboneKind::rscnn: return "rscnn";
  }
  return "?";
}

std::string to_string(Aggregation agg) {
  switch (agg) {
    case Aggregation::max: return "max";
    case Aggregation::mean: return "mean";
    case Aggregation::sum: return "sum";
  }
  return "?";
}

BackboneKind parse_backbone_kind(const std::string& s) {
  if (s == "generic") return BackboneKind::generic;
  if (s == "dgcnn") return BackboneKind::dgcnn;
  if (s == "rscnn") return BackboneKind::rscnn;
  throw ConfigError("unknown backbone kind '" + s + "' (expected generic, dgcnn, rscnn)");
}

Aggregation parse_aggregation(const std::string& s) {
  if (s == "max") return Aggregation::max;
  if (s == "mean") return Aggregation::mean;
  if (s == "sum") return Aggregation::sum;
  throw ConfigError("unknown aggregation '" + s + "' (expected max, mean, sum)");
}

std::size_t BackboneParams::input_width() const {
  const std::size_t w = (config.global_coords ? 3 : 0) + extra_inputs;
  return (w == 0 && config.kind != BackboneKind::dgcnn) ? 1 : w;
}

BackboneParams BackboneParams::init(const BackboneConfig& cfg, const OrientationConfig& orientation,
                                    const GlobalOrientationConfig& global, std::size_t extra_inputs, Rng& rng) {
  if (cfg.widths.empty()) throw ConfigError("backbone: at least one layer width required");
  if (cfg.frames == 0) throw ConfigError("backbone: frames must be >= 1");
  if (cfg.k == 0) throw ConfigError("backbone: k must be >= 1");
  for (std::size_t w : cfg.widths) {
    if (w == 0) throw ConfigError("backbone: layer widths must be positive");
  }
  if (orientation.frames != cfg.frames) {
    throw ConfigError("backbone: orientation network emits " + std::to_string(orientation.frames) +
                      " frames but backbone expects " + std::to_string(cfg.frames));
  }

  BackboneParams p;
  p.config = cfg;
  p.extra_inputs = extra_inputs;
  Rng orient_rng = rng.split(1);
  p.orientation = OrientationNet::init(orientation, orient_rng);
  if (cfg.global_coords) {
    Rng global_rng = rng.split(2);
    p.global = GlobalOrientationNet::init(global, global_rng);
  }
  Rng layer_rng = rng.split(3);
  const std::size_t proj = 3 * cfg.frames;
  std::size_t d = p.input_width();
  for (std::size_t l = 0; l < cfg.widths.size(); ++l) {
    const std::size_t w = cfg.widths[l];
    switch (cfg.kind) {
      case BackboneKind::generic:
        p.message.push_back(Mlp::init(2 * d + proj, w, w, layer_rng));
        break;
      case BackboneKind::rscnn:
        p.message.push_back(Mlp::init(1 + proj, d, d, layer_rng));
        p.lift.push_back(Linear::init(d, w, layer_rng));
        break;
      case BackboneKind::dgcnn:
        p.message.push_back(l == 0 ? Mlp::init(proj + d, w, w, layer_rng) : Mlp::init(2 * d, w, w, layer_rng));
        break;
    }
    d = w;
  }
  return p;
}

void BackboneParams::collect(ParamList& out, const std::string& prefix) const {
  orientation.collect(out, prefix + ".orientation");
  if (global) global->collect(out, prefix + ".global");
  for (std::size_t l = 0; l < message.size(); ++l) message[l].collect(out, prefix + ".message." + std::to_string(l));
  for (std::size_t l = 0; l < lift.size(); ++l) lift[l].collect(out, prefix + ".lift." + std::to_string(l));
}

Tensor neighbor_offsets(const Points& points, const KnnGraph& graph) {
  const auto n = static_cast<std::size_t>(points.rows());
  const std::size_t k = graph.k;
  if (graph.idx.shape != Shape{n, k}) throw ShapeError("neighbor_offsets: graph does not match cloud");
  std::vector<double> r(n * k * 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto nb = static_cast<Eigen::Index>(graph.idx.at(i, j));
      for (int c = 0; c < 3; ++c) {
        r[(i * k + j) * 3 + static_cast<std::size_t>(c)] = points(nb, c) - points(static_cast<Eigen::Index>(i), c);
      }
    }
  }
  return Tensor::from_data({n, k, 3}, std::move(r));
}

Tensor project_multi(const std::vector<OrientationSet>& frames, const Tensor& offsets) {
  if (frames.empty()) throw ConfigError("project_multi: at least one frame set required");
  if (frames.size() == 1) return project_to_frames(frames.front(), offsets);
  std::vector<Tensor> parts;
  parts.reserve(frames.size());
  for (const auto& f : frames) parts.push_back(project_to_frames(f, offsets));
  return concat(parts, 2);
}

Tensor oriented_mp_layer(const Mlp& h_net, Aggregation agg, const Tensor& h, const Points& points,
                         const KnnGraph& graph, const std::vector<OrientationSet>& frames) {
  const auto n = static_cast<std::size_t>(points.rows());
  check_rows(h, n, "oriented_mp_layer");
  const Tensor proj = project_multi(frames, neighbor_offsets(points, graph));
  const Tensor msg = edge_mlp(h_net, {{EdgePart::center, h}, {EdgePart::neighbor, h}, {EdgePart::edge, proj}}, graph);
  return reduce(reduce_kind(agg), msg, 1);
}

Tensor rscnn_layer(const Mlp& m_net, const Tensor& h, const Points& points, const KnnGraph& graph,
                   const std::vector<OrientationSet>& frames) {
  const auto n = static_cast<std::size_t>(points.rows());
  check_rows(h, n, "rscnn_layer");
  const Tensor offsets = neighbor_offsets(points, graph);
  const Tensor proj = project_multi(frames, offsets);
  const Tensor first = frames.size() == 1 ? proj : slice(proj, 2, 0, 3);
  const Tensor dist = reshape(l2_norm_rows(first), {n, graph.k, 1});
  const Tensor weights = m_net(concat({dist, proj}, 2));
  return max(mul(weights, gather_rows(h, graph.idx)), 1);
}

Tensor dgcnn_first_layer(const Mlp& m0, const Points& points, const KnnGraph& graph,
                         const std::vector<OrientationSet>& frames, const Tensor& point_inputs) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<EdgePart> parts{{EdgePart::edge, project_multi(frames, neighbor_offsets(points, graph))}};
  if (point_inputs.defined() && point_inputs.shape()[1] > 0) {
    check_rows(point_inputs, n, "dgcnn_first_layer");
    parts.push_back({EdgePart::center, point_inputs});
  }
  return max(relu(edge_mlp(m0, parts, graph)), 1);
}

Tensor dgcnn_feature_layer(const Mlp& m_net, const Tensor& h, const KnnGraph& graph) {
  check_rows(h, graph.size(), "dgcnn_feature_layer");
  // [h_j - h_i, h_i] W = h_j W_a + h_i (W_b - W_a)
  const std::size_t d = h.shape()[1];
  const Linear& first = m_net.first;
  const Tensor wa = slice(first.weight, 0, 0, d);
  const Tensor wb = slice(first.weight, 0, d, d);
  Linear folded{concat({wa, sub(wb, wa)}, 0), first.bias};
  const Tensor pre = split_affine(folded, {{EdgePart::neighbor, h}, {EdgePart::center, h}}, graph);
  return max(relu(m_net.second(relu(pre))), 1);
}

Tensor dgcnn_feature_layer(const Mlp& m_net, const Tensor& h, std::size_t k) {
  return dgcnn_feature_layer(m_net, h, knn_features(h, k));
}

OrientationSet identity_frames(std::size_t n) {
  std::vector<double> eye(n * 9, 0.0);
  for (std::size_t i = 0; i < n; ++i) eye[i * 9] = eye[i * 9 + 4] = eye[i * 9 + 8] = 1.0;
  return {Tensor::from_data({n, 3, 3}, std::move(eye))};
}

Tensor canonical_coordinates(const GlobalFrame& global, const Points& points) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<double> centered(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      centered[i * 3 + static_cast<std::size_t>(c)] = points(static_cast<Eigen::Index>(i), c) - global.centroid[c];
    }
  }
  return matmul(Tensor::from_data({n, 3}, std::move(centered)), reshape(global.frame.frames, {3, 3}));
}

BackboneOutput backbone_forward(const BackboneParams& params, const Points& points, const BackboneOptions& options) {
  const BackboneConfig& cfg = params.config;
  const auto n = static_cast<std::size_t>(points.rows());
  BackboneOutput out;

  const KnnGraph orient_graph = knn(points, params.orientation.config.k);
  if (options.identity_frames) {
    out.frames.assign(cfg.frames, identity_frames(n));
  } else {
    out.frames = learn_orientation_frames(params.orientation, points, orient_graph, options.frame_mode,
                                          options.orientation_inputs)
                     .frames;
  }
  out.graph = cfg.k == params.orientation.config.k ? orient_graph : knn(points, cfg.k);

  std::vector<Tensor> inputs;
  if (cfg.global_coords) {
    if (!params.global) throw ConfigError("backbone: global_coords set but no global orientation network");
    if (options.identity_frames) {
      GlobalFrame g;
      g.frame = identity_frames(1);
      g.centroid = points.colwise().mean().transpose();
      out.global = g;
    } else {
      out.global = learn_global_orientation(*params.global, points);
    }
    inputs.push_back(canonical_coordinates(*out.global, points));
  }
  if (params.extra_inputs > 0) {
    if (!options.extra_features) throw ConfigError("backbone: model expects task inputs but none were supplied");
    Tensor extra = options.extra_features(out.frames);
    if (extra.shape() != Shape{n, params.extra_inputs}) {
      throw ShapeError("backbone: task inputs have shape " + to_string(extra.shape()));
    }
    inputs.push_back(std::move(extra));
  }
  Tensor h;
  if (!inputs.empty()) {
    h = inputs.size() == 1 ? inputs.front() : concat(inputs, 1);
  } else {
    h = cfg.kind == BackboneKind::dgcnn ? Tensor::zeros({n, 0}) : Tensor::ones({n, 1});
  }

  for (std::size_t l = 0; l < cfg.widths.size(); ++l) {
    switch (cfg.kind) {
      case BackboneKind::generic:
        h = oriented_mp_layer(params.message[l], cfg.agg, h, points, out.graph, out.frames);
        break;
      case BackboneKind::rscnn:
        h = relu(params.lift[l](rscnn_layer(params.message[l], h, points, out.graph, out.frames)));
        break;
      case BackboneKind::dgcnn:
        if (l == 0) {
          h = dgcnn_first_layer(params.message[l], points, out.graph, out.frames, h);
        } else if (cfg.feature_knn) {
          h = dgcnn_feature_layer(params.message[l], h, std::min(cfg.k, n - 1));
        } else {
          h = dgcnn_feature_layer(params.message[l], h, out.graph);
        }
        break;
    }
    out.layers.push_back(h);
  }
  out.features = h;
  return out;
}

}  // namespace orientmp
