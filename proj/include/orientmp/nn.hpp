#pragma once

#include <string>
#include <vector>

#include "orientmp/rng.hpp"
#include "orientmp/tensor.hpp"

namespace orientmp {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Trainable leaves in a fixed, deterministic order.
using ParamList = std::vector<NamedTensor>;

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Affine map over the last axis: x[..., in] -> x W + b.
struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]; undefined for bias-free maps

  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }

  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// affine -> relu -> affine.
struct Mlp {
  Linear first;
  Linear second;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

  std::size_t in_features() const { return first.in_features(); }
  std::size_t out_features() const { return second.out_features(); }

  Tensor operator()(const Tensor& x) const { return second(relu(first(x))); }
  void collect(ParamList& out, const std::string& prefix) const;
};

}  // namespace orientmp
