#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "escape/nn/tensor.hpp"

namespace escape::nn {

template <class T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape that produced it is alive and not released.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::int32_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::int32_t id() const { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::int64_t dim(int axis) const { return value().dim(axis); }

 private:
  Tape<T>* tape_ = nullptr;
  std::int32_t id_ = -1;
};

/// Records a computation for reverse-mode differentiation.
///
/// Every op appends one node holding its forward value and a closure that
/// pushes the node's incoming gradient to its inputs. Parameter leaves point
/// at the owning Parameter; backward() adds their gradients into the
/// parameter's grad buffer, so calling backward more than once (with
/// retain_graph) or on several tapes accumulates.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const T>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(Node{std::move(value), nullptr, {}, false, nullptr}); }

  Var<T> parameter(Parameter<T>& p) { return push(Node{Tensor<T>{}, &p, {}, true, nullptr}); }

  Var<T> record(Tensor<T> value, bool needs_grad, BackwardFn fn) {
    return push(Node{std::move(value), nullptr, {}, needs_grad, needs_grad ? std::move(fn) : nullptr});
  }

  const Tensor<T>& value(std::int32_t id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.param ? n.param->value : n.value;
  }

  bool needs_grad(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  /// Gradient slot of a node, zero-initialized on first access.
  std::span<T> grad(std::int32_t id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad.assign(value(id).size(), T(0));
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Reverse sweep from a scalar root. Unless retain_graph is set the tape is
  /// released afterwards and further use raises GraphConsumed.
  void backward(const Var<T>& root, bool retain_graph = false) {
    check_live();
    if (&root.tape() != this) throw Error(ErrorCode::kUsage, "root belongs to another tape");
    if (value(root.id()).size() != 1)
      throw Error(ErrorCode::kShapeMismatch, "backward needs a scalar root, got " + shape_str(root.shape()));
    for (auto& n : nodes_) n.grad.clear();
    grad(root.id())[0] = T(1);
    for (std::int32_t i = root.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.empty() || !n.needs_grad) continue;
      if (n.backward) {
        // The closure may grow other nodes' grad buffers but never this one.
        n.backward(*this, std::span<const T>(n.grad));
      } else if (n.param) {
        auto dst = n.param->value.ensure_grad();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
      }
    }
    if (retain_graph) {
      for (auto& n : nodes_) n.grad.clear();
    } else {
      release();
    }
  }

  void release() {
    nodes_.clear();
    nodes_.shrink_to_fit();
    consumed_ = true;
  }

 private:
  struct Node {
    Tensor<T> value;
    Parameter<T>* param;
    std::vector<T> grad;
    bool needs_grad;
    BackwardFn backward;
  };

  void check_live() const {
    if (consumed_) throw Error(ErrorCode::kGraphConsumed, "tape was already released by backward()");
  }

  Var<T> push(Node node) {
    check_live();
    nodes_.push_back(std::move(node));
    return Var<T>(this, static_cast<std::int32_t>(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace escape::nn
