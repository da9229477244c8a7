#pragma once

// Two executors with the same op vocabulary. GradTape records every op for
// reverse-mode differentiation; Eager evaluates immediately and keeps nothing,
// which bounds memory when running inference on full-size images.

#include <functional>
#include <memory>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "oasr/ops.hpp"
#include "oasr/tensor.hpp"

namespace oasr {

/// Handle to a value recorded on a GradTape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

template <class T>
class GradTape {
 public:
  using Scalar = T;
  using Handle = Var;

  /// Records a leaf. With requires_grad its gradient is kept for grad(v).
  Var input(Tensor<T> value, bool requires_grad = false) { return push("input", std::move(value), {}, requires_grad); }

  /// Records a learnable tensor by reference; it must stay alive and unchanged
  /// until backward() has run. backward() adds its gradient into *grad_sink.
  Var parameter(const Tensor<T>& value, Tensor<T>* grad_sink) {
    Var v = push("parameter", Tensor<T>(), {}, true);
    nodes_[v.id].ref = &value;
    nodes_[v.id].sink = grad_sink;
    return v;
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.ref ? *n.ref : n.value;
  }
  const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  /// Name of the operation that produced v ("input", "relu", ...).
  std::string_view op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  Var conv2d(Var x, Var w, Var b) {
    return push("conv2d", ops::conv2d(value(x), value(w), value(b)),
                [x, w, b](GradTape& t, const Tensor<T>& dy) {
                  auto g = ops::conv2d_backward(t.value(x), t.value(w), dy);
                  t.accumulate(x, std::move(g.input));
                  t.accumulate(w, std::move(g.weight));
                  t.accumulate(b, std::move(g.bias));
                },
                needs(x) || needs(w) || needs(b));
  }

  Var relu(Var x) {
    return push("relu", ops::relu(value(x)),
                [x](GradTape& t, const Tensor<T>& dy) { t.accumulate(x, ops::relu_backward(t.value(x), dy)); },
                needs(x));
  }

  Var sigmoid(Var x) {
    Var out = push("sigmoid", ops::sigmoid(value(x)), {}, needs(x));
    nodes_[out.id].backward = [x, out](GradTape& t, const Tensor<T>& dy) {
      t.accumulate(x, ops::sigmoid_backward(t.value(out), dy));
    };
    return out;
  }

  Var fully_connected(Var x, Var w, Var b) {
    return push("fully_connected", ops::fully_connected(value(x), value(w), value(b)),
                [x, w, b](GradTape& t, const Tensor<T>& dy) {
                  auto g = ops::fully_connected_backward(t.value(x), t.value(w), dy);
                  t.accumulate(x, std::move(g.input));
                  t.accumulate(w, std::move(g.weight));
                  t.accumulate(b, std::move(g.bias));
                },
                needs(x) || needs(w) || needs(b));
  }

  Var global_avg_pool(Var x) {
    return push("global_avg_pool", ops::global_avg_pool(value(x)),
                [x](GradTape& t, const Tensor<T>& dy) {
                  t.accumulate(x, ops::global_avg_pool_backward(t.value(x).shape(), dy));
                },
                needs(x));
  }

  Var channel_scale(Var x, Var alpha) {
    return push("channel_scale", ops::channel_scale(value(x), value(alpha)),
                [x, alpha](GradTape& t, const Tensor<T>& dy) {
                  auto g = ops::channel_scale_backward(t.value(x), t.value(alpha), dy);
                  t.accumulate(x, std::move(g.input));
                  t.accumulate(alpha, std::move(g.alpha));
                },
                needs(x) || needs(alpha));
  }

  Var concat(const std::vector<Var>& parts) {
    std::vector<const Tensor<T>*> ptrs;
    bool any = false;
    for (Var p : parts) {
      ptrs.push_back(&value(p));
      any = any || needs(p);
    }
    return push("concat", concat_channels<T>(std::span<const Tensor<T>* const>(ptrs)),
                [parts](GradTape& t, const Tensor<T>& dy) {
                  std::size_t lo = 0;
                  for (Var p : parts) {
                    const std::size_t c = t.value(p).shape().c();
                    t.accumulate(p, channel_slice(dy, lo, lo + c));
                    lo += c;
                  }
                },
                any);
  }

  Var add(Var a, Var b) {
    return push("add", oasr::add(value(a), value(b)),
                [a, b](GradTape& t, const Tensor<T>& dy) {
                  t.accumulate(a, Tensor<T>(dy));
                  t.accumulate(b, Tensor<T>(dy));
                },
                needs(a) || needs(b));
  }

  Var pixel_shuffle(Var x, std::size_t r) {
    return push("pixel_shuffle", ops::pixel_shuffle(value(x), r),
                [x, r](GradTape& t, const Tensor<T>& dy) { t.accumulate(x, ops::pixel_unshuffle(dy, r)); },
                needs(x));
  }

  /// Reverse pass from `out` seeded with d(loss)/d(out). Intermediate gradients
  /// are recomputed from scratch on each call; parameter sinks accumulate (+=).
  void backward(Var out, const Tensor<T>& seed) {
    if (!(seed.shape() == value(out).shape()))
      throw std::invalid_argument("backward: seed shape " + seed.shape().str() + " does not match output " +
                                  value(out).shape().str());
    for (auto& n : nodes_) n.grad = Tensor<T>();
    nodes_[out.id].grad = seed;
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.sink) *n.sink += n.grad;
    }
  }

 private:
  using BackwardFn = std::function<void(GradTape&, const Tensor<T>&)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    const Tensor<T>* ref = nullptr;  // parameters are not copied
    Tensor<T>* sink = nullptr;
    const char* op = "";
    bool needs_grad = false;
  };

  bool needs(Var v) const { return nodes_.at(v.id).needs_grad; }

  Var push(const char* op, Tensor<T> value, BackwardFn fn, bool needs_grad) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  void accumulate(Var v, Tensor<T>&& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.empty())
      n.grad = std::move(g);
    else
      n.grad += g;
  }

  std::vector<Node> nodes_;
};

/// Immediate-mode executor: values are shared, immutable tensors that are
/// released as soon as the model code drops its last handle.
template <class T>
class Eager {
 public:
  using Scalar = T;
  using Handle = std::shared_ptr<const Tensor<T>>;

  Handle input(Tensor<T> value, bool = false) { return std::make_shared<const Tensor<T>>(std::move(value)); }
  /// Borrows the tensor; the caller keeps it alive for the executor's lifetime.
  Handle parameter(const Tensor<T>& value, Tensor<T>* /*grad_sink*/) {
    return Handle(Handle(), &value);
  }
  const Tensor<T>& value(const Handle& h) const { return *h; }

  Handle conv2d(const Handle& x, const Handle& w, const Handle& b) { return wrap(ops::conv2d(*x, *w, *b)); }
  Handle relu(const Handle& x) { return wrap(ops::relu(*x)); }
  Handle sigmoid(const Handle& x) { return wrap(ops::sigmoid(*x)); }
  Handle fully_connected(const Handle& x, const Handle& w, const Handle& b) {
    return wrap(ops::fully_connected(*x, *w, *b));
  }
  Handle global_avg_pool(const Handle& x) { return wrap(ops::global_avg_pool(*x)); }
  Handle channel_scale(const Handle& x, const Handle& a) { return wrap(ops::channel_scale(*x, *a)); }
  Handle concat(const std::vector<Handle>& parts) {
    std::vector<const Tensor<T>*> ptrs;
    for (const auto& p : parts) ptrs.push_back(p.get());
    return wrap(concat_channels<T>(std::span<const Tensor<T>* const>(ptrs)));
  }
  Handle add(const Handle& a, const Handle& b) { return wrap(oasr::add(*a, *b)); }
  Handle pixel_shuffle(const Handle& x, std::size_t r) { return wrap(ops::pixel_shuffle(*x, r)); }

 private:
  static Handle wrap(Tensor<T>&& t) { return std::make_shared<const Tensor<T>>(std::move(t)); }
};

}  // namespace oasr
