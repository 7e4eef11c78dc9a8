#pragma once

// Tape-based reverse-mode differentiation. A Graph records every op applied
// to its Vars; backward() replays the tape in reverse. Parameters live in a
// ParamStore outside the graph, and their gradients are collected into a
// GradBuffer so several graphs can run against one store.

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsr/nn/tensor.hpp"

namespace tsr::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
  std::size_t id = 0;
};

template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter<T>& add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw Error(ErrorCode::ConfigError, "duplicate parameter " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->value = std::move(value);
    p->id = params_.size();
    index_[p->name] = p->id;
    params_.push_back(std::move(p));
    return *params_.back();
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  /// Marks every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& p : params_) {
      if (p->name.rfind(prefix, 0) == 0) p->trainable = trainable;
    }
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-parameter gradient accumulators aligned with a ParamStore.
template <typename T>
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const ParamStore<T>& store) {
    grads_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) grads_.emplace_back(store[i].value.shape());
  }

  std::size_t size() const { return grads_.size(); }
  Tensor<T>& operator[](std::size_t i) { return grads_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return grads_[i]; }

  void zero() {
    for (auto& g : grads_) g.fill(T{0});
  }

  void scale(T s) {
    for (auto& g : grads_) {
      for (auto& v : g.values()) v *= s;
    }
  }

  void add(const GradBuffer& other) {
    for (std::size_t i = 0; i < grads_.size(); ++i) {
      auto& dst = grads_[i].values();
      const auto& src = other.grads_[i].values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }

 private:
  std::vector<Tensor<T>> grads_;
};

struct Var {
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t index = kNone;
  bool valid() const { return index != kNone; }
};

template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, Var self)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor<T> value) { return push(std::move(value), nullptr, false, {}); }

  /// A leaf that receives a gradient (used to differentiate w.r.t. inputs).
  Var input(Tensor<T> value) { return push(std::move(value), nullptr, grad_enabled_, {}); }

  /// Leaf bound to a parameter. The value is referenced, not copied, so the
  /// parameter must outlive the graph and stay unchanged until backward().
  Var param(const Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    Var v = push(Tensor<T>{}, &p.value, grad_enabled_ && p.trainable, {});
    nodes_[v.index].param = &p;
    param_nodes_.emplace(&p, v);
    return v;
  }

  /// Records an op result. The backward function is kept only if some parent
  /// requires a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> parents, BackwardFn fn) {
    bool needs = false;
    for (Var p : parents) needs = needs || nodes_[p.index].requires_grad;
    return push(std::move(value), nullptr, needs, needs ? std::move(fn) : BackwardFn{});
  }

  Var record(Tensor<T> value, const std::vector<Var>& parents, BackwardFn fn) {
    bool needs = false;
    for (Var p : parents) needs = needs || nodes_[p.index].requires_grad;
    return push(std::move(value), nullptr, needs, needs ? std::move(fn) : BackwardFn{});
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_[v.index];
    return n.external ? *n.external : n.owned;
  }

  bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }
  bool has_grad(Var v) const { return !nodes_[v.index].grad.empty(); }

  /// Gradient accumulator of a node, allocated (zeroed) on first access.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_[v.index];
    if (n.grad.empty()) n.grad = Tensor<T>(value(v).shape());
    return n.grad;
  }

  std::size_t node_count() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node that requires a
  /// gradient. `loss` must hold a single element.
  void backward(Var loss) {
    if (value(loss).size() != 1) throw Error(ErrorCode::ShapeMismatch, "backward() needs a scalar loss");
    if (!nodes_[loss.index].requires_grad) return;
    grad(loss)[0] = T{1};
    for (std::uint32_t i = loss.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, Var{i});
    }
  }

  /// Adds parameter gradients from the last backward() into `out`.
  void accumulate_into(GradBuffer<T>& out) const {
    for (const auto& n : nodes_) {
      if (n.param == nullptr || n.grad.empty()) continue;
      auto& dst = out[n.param->id].values();
      const auto& src = n.grad.values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    BackwardFn backward;
    const Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Tensor<T> value, const Tensor<T>* external, bool requires_grad, BackwardFn fn) {
    if (nodes_.size() >= Var::kNone) throw Error(ErrorCode::ShapeMismatch, "graph too large");
    Node n;
    n.owned = std::move(value);
    n.external = external;
    n.requires_grad = requires_grad;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  bool grad_enabled_;
  std::deque<Node> nodes_;  // references stay valid across push_back
  std::unordered_map<const Parameter<T>*, Var> param_nodes_;
};

}  // namespace tsr::nn
