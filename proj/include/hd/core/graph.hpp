#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hd/core/tensor.hpp"

namespace hd {

// Reverse-mode tape. A Graph is built per evaluation (define-by-run); Var is a
// cheap handle into it. Parameters are registered through ParamTensor so their
// gradients land back in the owning module after backward().
template <class T>
struct ParamTensor {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  ParamTensor() = default;
  ParamTensor(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <class T>
class Graph;

template <class T>
class Var {
public:
  Var() = default;
  Var(Graph<T>* g, int id) : g_(g), id_(id) {}

  bool valid() const { return g_ != nullptr; }
  int id() const { return id_; }
  Graph<T>* graph() const { return g_; }
  const Tensor<T>& value() const;
  const std::vector<int>& shape() const { return value().shape(); }

private:
  Graph<T>* g_ = nullptr;
  int id_ = -1;
};

template <class T>
class Graph {
public:
  using BackwardFn = std::function<void(Graph&)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;       // allocated on demand
    BackwardFn backward;  // empty for leaves
    bool needs_grad = false;
    ParamTensor<T>* param = nullptr;  // set for parameter leaves
  };

  // ---- node construction ----

  Var<T> constant(Tensor<T> v) { return make(std::move(v), false, nullptr, {}); }

  Var<T> input(Tensor<T> v, bool needs_grad = true) {
    return make(std::move(v), needs_grad, nullptr, {});
  }

  Var<T> param(ParamTensor<T>& p, bool train_enabled = true) {
    Var<T> v = make(p.value, p.trainable && train_enabled, nullptr, {});
    nodes_[static_cast<size_t>(v.id())].param = &p;
    return v;
  }

  // bw receives (graph, id of the op's own output node)
  Var<T> op(Tensor<T> v, const std::vector<Var<T>>& parents,
            std::function<void(Graph&, int)> bw) {
    bool needs = false;
    for (const Var<T>& p : parents) needs = needs || node(p.id()).needs_grad;
    Var<T> out = make(std::move(v), needs, BackwardFn{}, {});
    if (needs && bw)
      node(out.id()).backward = [bw = std::move(bw), id = out.id()](Graph& g) { bw(g, id); };
    return out;
  }

  // ---- access ----

  Node& node(int id) { return nodes_.at(static_cast<size_t>(id)); }
  const Node& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }
  const Tensor<T>& value(int id) const { return node(id).value; }

  Tensor<T>& grad(int id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape());
    return n.grad;
  }

  Tensor<T> grad_of(const Var<T>& v) { return grad(v.id()); }

  size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root)=1 and sweeps the tape in reverse creation order.
  // Parameter leaves accumulate into their ParamTensor::grad.
  void backward(const Var<T>& root) {
    const Node& r = node(root.id());
    if (r.value.numel() != 1)
      throw std::invalid_argument("backward: root must be scalar, got " + r.value.shape_str());
    if (!r.needs_grad) return;
    grad(root.id())[0] = T(1);
    for (int id = root.id(); id >= 0; --id) {
      Node& n = node(id);
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this);
      if (n.param) {
        Tensor<T>& pg = n.param->grad;
        const Tensor<T>& g = n.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
      }
    }
  }

private:
  Var<T> make(Tensor<T> v, bool needs, BackwardFn bw, std::vector<Var<T>> /*parents kept alive in bw*/) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  // deque keeps value() and grad() references stable while new nodes are added
  std::deque<Node> nodes_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return g_->value(id_);
}

// Accumulate src into the grad buffer of node id (helper for op backwards).
template <class T>
inline void accumulate_grad(Graph<T>& g, int id, const Tensor<T>& src) {
  if (!g.node(id).needs_grad) return;
  Tensor<T>& dst = g.grad(id);
  for (std::int64_t i = 0; i < src.numel(); ++i) dst[i] += src[i];
}

}  // namespace hd
