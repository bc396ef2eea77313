#include "orientmp/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

namespace orientmp {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool g_grad_enabled = true;

using ImplPtr = std::shared_ptr<TensorImpl>;
using BackwardFn = std::function<void(const TensorImpl&, std::span<const ImplPtr>)>;

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

/// Right-aligned NumPy broadcast of two shapes.
Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

/// Strides of `in` viewed in the broadcast output space (0 on expanded axes).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  const auto own = row_major_strides(in);
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != 1) strides[offset + i] = own[i];
  }
  return strides;
}

/// Calls f(out_index, a_offset, b_offset) for every element of `out`.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        F&& f) {
  const std::size_t total = numel_of(out);
  if (total == 0) return;
  const std::size_t rank = out.size();
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  const std::size_t inner = out[rank - 1];
  const std::size_t ia_step = sa[rank - 1];
  const std::size_t ib_step = sb[rank - 1];
  std::vector<std::size_t> counter(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t i = 0; i < total; i += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(i + j, ia + j * ia_step, ib + j * ib_step);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++counter[d];
      ia += sa[d];
      ib += sb[d];
      if (counter[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      counter[d] = 0;
    }
  }
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ArgumentError(std::string(op) + ": undefined tensor");
}

template <class Fwd, class Bwd>
Tensor unary_op(const char* op, const Tensor& x, Fwd fwd, Bwd dfdx) {
  check_defined(x, op);
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_op(op, x.shape(), std::move(out), {x}, [dfdx](const TensorImpl& o, std::span<const ImplPtr> ins) {
    auto& xi = *ins[0];
    auto& g = xi.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * dfdx(xi.data[i], o.data[i]);
  });
}

enum class BinaryKind { add, sub, mul, div };

template <BinaryKind kind>
Tensor binary_op_impl(const char* op, const Tensor& a, const Tensor& b) {
  check_defined(a, op);
  check_defined(b, op);
  auto apply = [](double x, double y) {
    switch (kind) {
      case BinaryKind::add: return x + y;
      case BinaryKind::sub: return x - y;
      case BinaryKind::mul: return x * y;
      case BinaryKind::div: return x / y;
    }
    return 0.0;
  };
  const auto da = a.data();
  const auto db = b.data();
  if (a.shape() == b.shape()) {
    std::vector<double> out(da.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(da[i], db[i]);
    return make_op(op, a.shape(), std::move(out), {a, b}, [](const TensorImpl& o, std::span<const ImplPtr> ins) {
      auto& ai = *ins[0];
      auto& bi = *ins[1];
      const auto& g = o.grad;
      if (ai.requires_grad) {
        auto& ga = ai.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case BinaryKind::add:
            case BinaryKind::sub: ga[i] += g[i]; break;
            case BinaryKind::mul: ga[i] += g[i] * bi.data[i]; break;
            case BinaryKind::div: ga[i] += g[i] / bi.data[i]; break;
          }
        }
      }
      if (bi.requires_grad) {
        auto& gb = bi.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case BinaryKind::add: gb[i] += g[i]; break;
            case BinaryKind::sub: gb[i] -= g[i]; break;
            case BinaryKind::mul: gb[i] += g[i] * ai.data[i]; break;
            case BinaryKind::div: gb[i] -= g[i] * o.data[i] / bi.data[i]; break;
          }
        }
      }
    });
  }

  Shape out_shape = broadcast_shapes(a.shape(), b.shape(), op);
  auto sa = broadcast_strides(a.shape(), out_shape);
  auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<double> out(numel_of(out_shape));
  for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = apply(da[ia], db[ib]);
  });
  return make_op(op, out_shape, std::move(out), {a, b},
                 [sa = std::move(sa), sb = std::move(sb)](const TensorImpl& o, std::span<const ImplPtr> ins) {
                   auto& ai = *ins[0];
                   auto& bi = *ins[1];
                   const auto& g = o.grad;
                   std::vector<double>* ga = ai.requires_grad ? &ai.grad_buffer() : nullptr;
                   std::vector<double>* gb = bi.requires_grad ? &bi.grad_buffer() : nullptr;
                   for_each_broadcast(o.shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                     const double gi = g[i];
                     switch (kind) {
                       case BinaryKind::add:
                         if (ga) (*ga)[ia] += gi;
                         if (gb) (*gb)[ib] += gi;
                         break;
                       case BinaryKind::sub:
                         if (ga) (*ga)[ia] += gi;
                         if (gb) (*gb)[ib] -= gi;
                         break;
                       case BinaryKind::mul:
                         if (ga) (*ga)[ia] += gi * bi.data[ib];
                         if (gb) (*gb)[ib] += gi * ai.data[ia];
                         break;
                       case BinaryKind::div:
                         if (ga) (*ga)[ia] += gi / bi.data[ib];
                         if (gb) (*gb)[ib] -= gi * o.data[i] / bi.data[ib];
                         break;
                     }
                   });
                 });
}

Tensor binary_op(const char* op, BinaryKind kind, const Tensor& a, const Tensor& b) {
  switch (kind) {
    case BinaryKind::add: return binary_op_impl<BinaryKind::add>(op, a, b);
    case BinaryKind::sub: return binary_op_impl<BinaryKind::sub>(op, a, b);
    case BinaryKind::mul: return binary_op_impl<BinaryKind::mul>(op, a, b);
    case BinaryKind::div: return binary_op_impl<BinaryKind::div>(op, a, b);
  }
  throw ArgumentError(std::string(op) + ": unknown binary kind");
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != numel_of(shape)) {
    throw ShapeError("from_data: " + std::to_string(values.size()) + " values do not fill shape " + to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }
Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  if (!impl_) throw StateError("shape of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }
std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() {
  if (impl_->node) throw StateError("mutable_data on a non-leaf tensor");
  return impl_->data;
}

std::vector<double> Tensor::to_vector() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("at(): rank mismatch");
  std::size_t flat = 0;
  std::size_t d = 0;
  for (std::size_t i : index) {
    if (i >= s[d]) throw IndexError("at(): index out of range");
    flat = flat * s[d] + i;
    ++d;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (impl_->node) throw StateError("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = value;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() { return impl_->grad_buffer(); }
void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return from_data(shape(), impl_->data, false); }

void Tensor::backward() const {
  if (!impl_) throw StateError("backward on undefined tensor");
  if (impl_->data.size() != 1) throw ShapeError("backward requires a scalar loss, got " + to_string(shape()));
  if (!impl_->requires_grad) throw StateError("backward: loss does not require grad");

  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{impl_.get()};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    TensorImpl* t = stack.back();
    stack.pop_back();
    if (!t->node) continue;
    order.push_back(t);
    for (const auto& in : t->node->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const TensorImpl* a, const TensorImpl* b) { return a->node->seq > b->node->seq; });

  impl_->grad_buffer()[0] += 1.0;
  for (TensorImpl* t : order) {
    if (t->grad.empty()) continue;
    t->node->backward(*t);
  }
  // Detach every node before any is destroyed: dropping a node can free
  // tensors that are still listed in `order`.
  std::vector<std::shared_ptr<Node>> released;
  released.reserve(order.size());
  for (TensorImpl* t : order) released.push_back(std::move(t->node));
}

Tensor make_op(const char* op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardFn backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  if (impl->data.size() != numel_of(impl->shape)) {
    throw ShapeError(std::string(op) + ": result buffer does not match shape " + to_string(impl->shape));
  }
  const bool needs = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
                       return t.requires_grad();
                     });
  if (needs) {
    impl->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.impl());
    node->backward = [fn = std::move(backward), raw = node.get()](const TensorImpl& out) {
      fn(out, std::span<const ImplPtr>(raw->inputs));
    };
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

// ---------------------------------------------------------------------------
// Pointwise

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinaryKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", BinaryKind::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op("div", BinaryKind::div, a, b); }

Tensor neg(const Tensor& x) {
  return unary_op("neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary_op("scale", x, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary_op("add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary_op("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                  [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sqrt(const Tensor& x) {
  return unary_op("sqrt", x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary_op("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// ---------------------------------------------------------------------------
// matmul

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul: operands need rank >= 2");
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape().back();
  const std::size_t k2 = b.shape()[b.rank() - 2];
  const std::size_t n = b.shape().back();
  if (k != k2) throw ShapeError("matmul: inner dims differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));

  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch = broadcast_shapes(batch_a, batch_b, "matmul");
  auto sa = broadcast_strides(batch_a, batch);
  auto sb = broadcast_strides(batch_b, batch);
  for (auto& s : sa) s *= m * k;
  for (auto& s : sb) s *= k * n;

  const std::size_t nbatch = numel_of(batch);
  std::vector<std::size_t> offs_a(nbatch);
  std::vector<std::size_t> offs_b(nbatch);
  for_each_broadcast(batch, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    offs_a[i] = ia;
    offs_b[i] = ib;
  });
  if (batch.empty()) {
    offs_a.assign(1, 0);
    offs_b.assign(1, 0);
  }

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(numel_of(out_shape), 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t bi = 0; bi < offs_a.size(); ++bi) {
    MatMap(out.data() + bi * m * n, m, n).noalias() = CMatMap(pa + offs_a[bi], m, k) * CMatMap(pb + offs_b[bi], k, n);
  }

  return make_op("matmul", std::move(out_shape), std::move(out), {a, b},
                 [m, k, n, offs_a = std::move(offs_a), offs_b = std::move(offs_b)](const TensorImpl& o,
                                                                                  std::span<const ImplPtr> ins) {
                   auto& ai = *ins[0];
                   auto& bi = *ins[1];
                   for (std::size_t t = 0; t < offs_a.size(); ++t) {
                     const CMatMap G(o.grad.data() + t * m * n, m, n);
                     if (ai.requires_grad) {
                       MatMap(ai.grad_buffer().data() + offs_a[t], m, k).noalias() +=
                           G * CMatMap(bi.data.data() + offs_b[t], k, n).transpose();
                     }
                     if (bi.requires_grad) {
                       MatMap(bi.grad_buffer().data() + offs_b[t], k, n).noalias() +=
                           CMatMap(ai.data.data() + offs_a[t], m, k).transpose() * G;
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce(ReduceKind kind, const Tensor& x, std::size_t axis) {
  check_defined(x, "reduce");
  if (axis >= x.rank()) {
    throw ShapeError("reduce: axis " + std::to_string(axis) + " out of range for " + to_string(x.shape()));
  }
  const auto& s = x.shape();
  const std::size_t len = s[axis];
  if (len == 0 && kind != ReduceKind::sum) throw ShapeError("reduce: empty axis");
  const std::size_t outer = numel_of(Shape(s.begin(), s.begin() + axis));
  const std::size_t inner = numel_of(Shape(s.begin() + axis + 1, s.end()));
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + axis);

  const auto in = x.data();
  std::vector<double> out(outer * inner, 0.0);
  std::vector<std::size_t> argmax;
  if (kind == ReduceKind::max) argmax.assign(outer * inner, 0);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* base = in.data() + o * len * inner;
    double* dst = out.data() + o * inner;
    if (kind == ReduceKind::max) {
      std::size_t* am = argmax.data() + o * inner;
      for (std::size_t j = 0; j < inner; ++j) dst[j] = base[j];
      for (std::size_t r = 1; r < len; ++r) {
        const double* row = base + r * inner;
        for (std::size_t j = 0; j < inner; ++j) {
          if (row[j] > dst[j]) {
            dst[j] = row[j];
            am[j] = r;
          }
        }
      }
    } else {
      for (std::size_t r = 0; r < len; ++r) {
        const double* row = base + r * inner;
        for (std::size_t j = 0; j < inner; ++j) dst[j] += row[j];
      }
      if (kind == ReduceKind::mean) {
        const double inv = 1.0 / static_cast<double>(len);
        for (std::size_t j = 0; j < inner; ++j) dst[j] *= inv;
      }
    }
  }

  const char* name = kind == ReduceKind::sum ? "sum" : kind == ReduceKind::mean ? "mean" : "max";
  return make_op(name, std::move(out_shape), std::move(out), {x},
                 [kind, outer, inner, len, argmax = std::move(argmax)](const TensorImpl& o, std::span<const ImplPtr> ins) {
                   auto& g = ins[0]->grad_buffer();
                   const double w = kind == ReduceKind::mean ? 1.0 / static_cast<double>(len) : 1.0;
                   for (std::size_t b = 0; b < outer; ++b) {
                     const double* go = o.grad.data() + b * inner;
                     double* gi = g.data() + b * len * inner;
                     if (kind == ReduceKind::max) {
                       const std::size_t* am = argmax.data() + b * inner;
                       for (std::size_t j = 0; j < inner; ++j) gi[am[j] * inner + j] += go[j];
                     } else {
                       for (std::size_t r = 0; r < len; ++r) {
                         for (std::size_t j = 0; j < inner; ++j) gi[r * inner + j] += w * go[j];
                       }
                     }
                   }
                 });
}

Tensor sum(const Tensor& x, std::size_t axis) { return reduce(ReduceKind::sum, x, axis); }
Tensor mean(const Tensor& x, std::size_t axis) { return reduce(ReduceKind::mean, x, axis); }
Tensor max(const Tensor& x, std::size_t axis) { return reduce(ReduceKind::max, x, axis); }
Tensor sum_all(const Tensor& x) { return sum(reshape(x, {x.numel()}), 0); }
Tensor mean_all(const Tensor& x) { return mean(reshape(x, {x.numel()}), 0); }

// ---------------------------------------------------------------------------
// Layout

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis) {
  if (tensors.empty()) throw ArgumentError("concat: no inputs");
  const Shape& first = tensors.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& t : tensors) {
    check_defined(t, "concat");
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw ShapeError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    lens.push_back(s[axis]);
    total += s[axis];
  }
  const std::size_t outer = numel_of(Shape(first.begin(), first.begin() + axis));
  const std::size_t inner = numel_of(Shape(first.begin() + axis + 1, first.end()));
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::size_t col = 0;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const auto src = tensors[t].data();
    const std::size_t chunk = lens[t] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk, out.data() + (o * total + col) * inner);
    }
    col += lens[t];
  }
  return make_op("concat", std::move(out_shape), std::move(out), tensors,
                 [outer, inner, total, lens = std::move(lens)](const TensorImpl& o, std::span<const ImplPtr> ins) {
                   std::size_t col = 0;
                   for (std::size_t t = 0; t < ins.size(); ++t) {
                     const std::size_t chunk = lens[t] * inner;
                     if (ins[t]->requires_grad) {
                       auto& g = ins[t]->grad_buffer();
                       for (std::size_t b = 0; b < outer; ++b) {
                         const double* src = o.grad.data() + (b * total + col) * inner;
                         double* dst = g.data() + b * chunk;
                         for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
                       }
                     }
                     col += lens[t];
                   }
                 });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  check_defined(x, "slice");
  const Shape& s = x.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) + ") on axis " +
                     std::to_string(axis) + " of " + to_string(s));
  }
  const std::size_t outer = numel_of(Shape(s.begin(), s.begin() + axis));
  const std::size_t inner = numel_of(Shape(s.begin() + axis + 1, s.end()));
  const std::size_t full = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<double> out(outer * length * inner);
  const auto src = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src.data() + (o * full + start) * inner, length * inner, out.data() + o * length * inner);
  }
  return make_op("slice", std::move(out_shape), std::move(out), {x},
                 [outer, inner, full, start, length](const TensorImpl& o, std::span<const ImplPtr> ins) {
                   auto& g = ins[0]->grad_buffer();
                   for (std::size_t b = 0; b < outer; ++b) {
                     const double* src = o.grad.data() + b * length * inner;
                     double* dst = g.data() + (b * full + start) * inner;
                     for (std::size_t j = 0; j < length * inner; ++j) dst[j] += src[j];
                   }
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_defined(x, "reshape");
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  return make_op("reshape", std::move(shape), x.to_vector(), {x}, [](const TensorImpl& o, std::span<const ImplPtr> ins) {
    auto& g = ins[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  check_defined(x, "transpose");
  if (x.rank() < 2) throw ShapeError("transpose: rank < 2");
  Shape out_shape = x.shape();
  const std::size_t r = out_shape[out_shape.size() - 2];
  const std::size_t c = out_shape.back();
  std::swap(out_shape[out_shape.size() - 2], out_shape.back());
  const std::size_t batch = r * c == 0 ? 0 : x.numel() / (r * c);
  const auto src = x.data();
  std::vector<double> out(src.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = src[b * r * c + i * c + j];
    }
  }
  return make_op("transpose", std::move(out_shape), std::move(out), {x},
                 [batch, r, c](const TensorImpl& o, std::span<const ImplPtr> ins) {
                   auto& g = ins[0]->grad_buffer();
                   for (std::size_t b = 0; b < batch; ++b) {
                     for (std::size_t i = 0; i < r; ++i) {
                       for (std::size_t j = 0; j < c; ++j) g[b * r * c + i * c + j] += o.grad[b * r * c + j * r + i];
                     }
                   }
                 });
}

Tensor gather_rows(const Tensor& x, const IndexTensor& idx) {
  check_defined(x, "gather_rows");
  if (x.rank() < 1) throw ShapeError("gather_rows: rank-0 source");
  if (idx.data.size() != numel_of(idx.shape)) throw ShapeError("gather_rows: malformed index tensor");
  const std::size_t rows = x.shape()[0];
  const std::size_t width = rows == 0 ? 0 : x.numel() / rows;
  for (std::int64_t i : idx.data) {
    if (i < 0 || static_cast<std::size_t>(i) >= rows) {
      throw IndexError("gather_rows: index " + std::to_string(i) + " outside [0, " + std::to_string(rows) + ")");
    }
  }
  Shape out_shape = idx.shape;
  out_shape.insert(out_shape.end(), x.shape().begin() + 1, x.shape().end());
  std::vector<double> out(idx.data.size() * width);
  const auto src = x.data();
  for (std::size_t m = 0; m < idx.data.size(); ++m) {
    std::copy_n(src.data() + static_cast<std::size_t>(idx.data[m]) * width, width, out.data() + m * width);
  }
  return make_op("gather_rows", std::move(out_shape), std::move(out), {x},
                 [width, index = idx.data](const TensorImpl& o, std::span<const ImplPtr> ins) {
                   auto& g = ins[0]->grad_buffer();
                   for (std::size_t m = 0; m < index.size(); ++m) {
                     double* dst = g.data() + static_cast<std::size_t>(index[m]) * width;
                     const double* src = o.grad.data() + m * width;
                     for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                   }
                 });
}

Tensor l2_norm_rows(const Tensor& x, double eps) {
  check_defined(x, "l2_norm_rows");
  if (x.rank() < 1) throw ShapeError("l2_norm_rows: rank-0 input");
  if (!(eps > 0.0)) throw ArgumentError("l2_norm_rows: eps must be positive");
  const std::size_t width = x.shape().back();
  const std::size_t rows = width == 0 ? numel_of(Shape(x.shape().begin(), x.shape().end() - 1)) : x.numel() / width;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  const auto src = x.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = eps * eps;
    for (std::size_t j = 0; j < width; ++j) acc += src[r * width + j] * src[r * width + j];
    out[r] = std::sqrt(acc);
  }
  return make_op("l2_norm_rows", std::move(out_shape), std::move(out), {x},
                 [rows, width](const TensorImpl& o, std::span<const ImplPtr> ins) {
                   auto& xi = *ins[0];
                   auto& g = xi.grad_buffer();
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double f = o.grad[r] / o.data[r];
                     for (std::size_t j = 0; j < width; ++j) g[r * width + j] += f * xi.data[r * width + j];
                   }
                 });
}

}  // namespace orientmp
