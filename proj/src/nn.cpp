#include "orientmp/nn.hpp"

#include <cmath>

namespace orientmp {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const std::size_t n = numel_of(shape);
  std::vector<double> values(n, 0.0);
  if (fan_in + fan_out > 0) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : values) v = rng.uniform(-a, a);
  }
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = glorot_uniform({in, out}, in, out, rng);
  if (with_bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.empty() || s.back() != in_features()) {
    throw ShapeError("Linear: expected last axis " + std::to_string(in_features()) + ", got " + to_string(s));
  }
  const std::size_t rows = s.back() == 0 ? numel_of(Shape(s.begin(), s.end() - 1)) : x.numel() / s.back();
  Tensor y = matmul(s.size() == 2 ? x : reshape(x, {rows, s.back()}), weight);
  if (bias.defined()) y = add(y, bias);
  if (s.size() == 2) return y;
  Shape out_shape = s;
  out_shape.back() = out_features();
  return reshape(y, std::move(out_shape));
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  return {Linear::init(in, hidden, rng), Linear::init(hidden, out, rng)};
}

void Mlp::collect(ParamList& out, const std::string& prefix) const {
  first.collect(out, prefix + ".0");
  second.collect(out, prefix + ".1");
}

}  // namespace orientmp
