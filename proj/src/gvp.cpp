#include "orientmp/gvp.hpp"

#include <algorithm>
#include <cmath>

namespace orientmp {

namespace {

IndexTensor self_index(std::size_t n, std::size_t k) {
  IndexTensor idx;
  idx.shape = {n, k};
  idx.data.resize(n * k);
  for (std::size_t i = 0; i < n; ++i) std::fill_n(idx.data.begin() + static_cast<std::ptrdiff_t>(i * k), k, i);
  return idx;
}

void check_features(const FeaturePair& f, std::size_t n, std::size_t d, std::size_t m, const char* where) {
  const Shape want_s{n, d};
  const Shape want_v{n, m, 3};
  if (f.scalars.shape() != want_s || f.vectors.shape() != want_v) {
    throw ShapeError(std::string(where) + ": expected features " + to_string(want_s) + "/" + to_string(want_v) +
                     ", got " + to_string(f.scalars.shape()) + "/" + to_string(f.vectors.shape()));
  }
}

}  // namespace

FeaturePair FeaturePair::zeros(std::size_t n, std::size_t scalar_channels, std::size_t vector_channels) {
  return {Tensor::zeros({n, scalar_channels}), Tensor::zeros({n, vector_channels, 3})};
}

GvpParams GvpParams::init(const GvpDims& dims, Rng& rng) {
  GvpParams p;
  p.dims = dims;
  const std::size_t hidden = std::max(dims.vectors_in, dims.vectors_out);
  p.w_h = glorot_uniform({hidden, dims.vectors_in}, dims.vectors_in, hidden, rng);
  p.w_mu = glorot_uniform({dims.vectors_out, hidden}, hidden, dims.vectors_out, rng);
  p.scalar = Linear::init(dims.scalars_in + hidden, dims.scalars_out, rng);
  p.gate = Linear::init(dims.scalars_out, dims.vectors_out, rng);
  return p;
}

void GvpParams::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".w_h", w_h});
  out.push_back({prefix + ".w_mu", w_mu});
  scalar.collect(out, prefix + ".scalar");
  gate.collect(out, prefix + ".gate");
}

FeaturePair gvp_forward(const GvpParams& p, const Tensor& scalars, const Tensor& vectors) {
  if (scalars.rank() != 2 || vectors.rank() != 3 || scalars.shape()[0] != vectors.shape()[0] ||
      scalars.shape()[1] != p.dims.scalars_in || vectors.shape()[1] != p.dims.vectors_in || vectors.shape()[2] != 3) {
    throw ShapeError("gvp_forward: got " + to_string(scalars.shape()) + "/" + to_string(vectors.shape()) +
                     " for layer (" + std::to_string(p.dims.scalars_in) + ", " + std::to_string(p.dims.vectors_in) +
                     ")");
  }
  const std::size_t n = scalars.shape()[0];
  const Tensor vh = matmul(p.w_h, vectors);
  const Tensor s_out = relu(p.scalar(concat({scalars, l2_norm_rows(vh)}, 1)));
  const Tensor v_mix = matmul(p.w_mu, vh);
  const Tensor g = reshape(sigmoid(p.gate(s_out)), {n, p.dims.vectors_out, 1});
  return {s_out, mul(v_mix, g)};
}

VGConvLayer VGConvLayer::init(const GvpDims& dims, Rng& rng) {
  VGConvLayer layer;
  layer.message = GvpParams::init({dims.scalars_in + 1, dims.vectors_in + 1, dims.scalars_out, dims.vectors_out}, rng);
  layer.update = GvpParams::init({dims.scalars_out, dims.vectors_out, dims.scalars_out, dims.vectors_out}, rng);
  return layer;
}

void VGConvLayer::collect(ParamList& out, const std::string& prefix) const {
  message.collect(out, prefix + ".message");
  update.collect(out, prefix + ".update");
}

FeaturePair v_gconv_between(const VGConvLayer& layer, const Points& queries, const Points& refs,
                            const KnnGraph& graph, const FeaturePair& query_features) {
  const auto m = static_cast<std::size_t>(queries.rows());
  const std::size_t k = graph.k;
  if (graph.idx.shape != Shape{m, k}) {
    throw ShapeError("v_gconv: graph " + to_string(graph.idx.shape) + " does not match " + std::to_string(m) +
                     " queries");
  }
  check_features(query_features, m, layer.scalars_in(), layer.vectors_in(), "v_gconv");

  // Edge geometry is a constant of the input cloud.
  std::vector<double> rel(m * k * 3);
  std::vector<double> dist(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto r = static_cast<Eigen::Index>(graph.idx.at(i, j));
      if (r < 0 || r >= refs.rows()) throw IndexError("v_gconv: neighbor index out of range");
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = queries(static_cast<Eigen::Index>(i), c) - refs(r, c);
        rel[(i * k + j) * 3 + static_cast<std::size_t>(c)] = d;
        acc += d * d;
      }
      dist[i * k + j] = std::sqrt(acc);
    }
  }
  const Tensor rel_t = Tensor::from_data({m, k, 1, 3}, std::move(rel));
  const Tensor dist_t = Tensor::from_data({m, k, 1}, std::move(dist));

  const IndexTensor own = self_index(m, k);
  const std::size_t d_in = layer.scalars_in();
  const std::size_t v_in = layer.vectors_in();
  const Tensor s_edge = reshape(concat({gather_rows(query_features.scalars, own), dist_t}, 2), {m * k, d_in + 1});
  const Tensor v_edge = reshape(concat({gather_rows(query_features.vectors, own), rel_t}, 2), {m * k, v_in + 1, 3});

  const FeaturePair msg = gvp_forward(layer.message, s_edge, v_edge);
  const std::size_t d_out = layer.scalars_out();
  const std::size_t v_out = layer.vectors_out();
  Tensor s_agg = mean(reshape(msg.scalars, {m, k, d_out}), 1);
  Tensor v_agg = mean(reshape(msg.vectors, {m, k, v_out, 3}), 1);
  if (d_in == d_out) s_agg = add(query_features.scalars, s_agg);
  if (v_in == v_out) v_agg = add(query_features.vectors, v_agg);

  const FeaturePair ff = gvp_forward(layer.update, s_agg, v_agg);
  return {add(s_agg, ff.scalars), add(v_agg, ff.vectors)};
}

FeaturePair v_gconv_forward(const VGConvLayer& layer, const Points& points, const KnnGraph& graph,
                            const FeaturePair& features) {
  return v_gconv_between(layer, points, points, graph, features);
}

std::vector<VGConvLayer> init_v_gconv_stack(const VGConvStackConfig& cfg, Rng& rng) {
  if (cfg.layers == 0) throw ConfigError("v_gconv stack needs at least one layer");
  if (cfg.output_vectors == 0) throw ConfigError("v_gconv stack must emit vector channels");
  std::vector<VGConvLayer> layers;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const bool last = l + 1 == cfg.layers;
    layers.push_back(VGConvLayer::init(
        {cfg.scalar_channels, cfg.vector_channels, cfg.scalar_channels, last ? cfg.output_vectors : cfg.vector_channels},
        rng));
  }
  return layers;
}

FeaturePair v_gconv_stack(const std::vector<VGConvLayer>& layers, const Points& points, const KnnGraph& graph,
                          const std::optional<FeaturePair>& initial) {
  if (layers.empty()) throw ConfigError("v_gconv_stack: no layers");
  for (std::size_t l = 1; l < layers.size(); ++l) {
    if (layers[l].scalars_in() != layers[l - 1].scalars_out() || layers[l].vectors_in() != layers[l - 1].vectors_out()) {
      throw ConfigError("v_gconv_stack: layer " + std::to_string(l) + " does not chain with its predecessor");
    }
  }
  if (initial && (initial->scalar_channels() != layers.front().scalars_in() ||
                  initial->vector_channels() != layers.front().vectors_in())) {
    throw ShapeError("v_gconv_stack: initial features do not match the first layer widths");
  }
  FeaturePair f = initial ? *initial
                          : FeaturePair::zeros(static_cast<std::size_t>(points.rows()), layers.front().scalars_in(),
                                               layers.front().vectors_in());
  for (const auto& layer : layers) f = v_gconv_forward(layer, points, graph, f);
  return f;
}

}  // namespace orientmp
