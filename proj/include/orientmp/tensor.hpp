#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "orientmp/error.hpp"

namespace orientmp {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);

struct TensorImpl;

/// One recorded operation. `seq` is drawn from a process-wide monotonic
/// counter, so sorting by it recovers a topological order of the graph.
struct Node {
  std::uint64_t seq = 0;
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  /// Gradient buffer, zero-initialized on first use.
  std::vector<double>& grad_buffer();
};

/// Integer index array (row-major), used for neighbor lists.
struct IndexTensor {
  Shape shape;
  std::vector<std::int64_t> data;

  std::size_t numel() const { return data.size(); }
  std::int64_t at(std::size_t row, std::size_t col) const { return data[row * shape.back() + col]; }
};

/// Dense row-major f64 array with optional reverse-mode gradient tracking.
///
/// Tensors are cheap handles: copies share the underlying buffer. Operations
/// never mutate their inputs; only leaves may be updated in place through
/// `mutable_data` (optimizer steps).
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. Gradients accumulate into every
  /// reachable tensor that requires grad; the graph is released afterwards.
  void backward() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Builds a result tensor and, if any input needs gradients, records `backward`.
/// The callback receives the output (values and gradient) and must accumulate
/// into `inputs[i]->grad_buffer()` for inputs with requires_grad set.
Tensor make_op(const char* op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               std::function<void(const TensorImpl& out, std::span<const std::shared_ptr<TensorImpl>> inputs)>
                   backward);

// Pointwise. Binary kinds broadcast NumPy-style.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

/// Batched matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

enum class ReduceKind { sum, mean, max };

/// Reduces and removes `axis`. Max routes gradient to the lowest-index argmax.
Tensor reduce(ReduceKind kind, const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor max(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& x, Shape shape);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);

/// out[m..., :] = x[idx[m...], :]; backward scatter-adds.
Tensor gather_rows(const Tensor& x, const IndexTensor& idx);

/// sqrt(sum(x^2) + eps^2) over the last axis.
Tensor l2_norm_rows(const Tensor& x, double eps = 1e-8);

}  // namespace orientmp
