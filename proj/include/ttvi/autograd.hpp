#pragma once

// Tape-based reverse-mode differentiation.
//
// A Graph records every operation in creation order, which is also a valid
// topological order: an op can only reference nodes that already exist.
// backward() walks the tape once in reverse.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ttvi/tensor.hpp"

namespace ttvi::ag {

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

template <typename T>
class Graph;

/// Per-node gradients produced by Graph::backward.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Tensor<T>> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  // d(loss)/d(node); zeros when the node does not influence the loss.
  Tensor<T> operator[](NodeId id) const {
    const auto& g = grads_.at(id.index);
    return g.size() ? g : Tensor<T>::zeros(shapes_.at(id.index));
  }
  bool reached(NodeId id) const { return grads_.at(id.index).size() != 0; }

 private:
  std::vector<Tensor<T>> grads_;
  std::vector<Shape> shapes_;
};

template <typename T>
class Graph {
 public:
  // grad_in[i] is null when input i needs no gradient; otherwise a zero-initialised
  // (or partially accumulated) buffer the op adds into.
  using BackwardFn =
      std::function<void(const Graph&, const Tensor<T>& grad_out, std::span<Tensor<T>* const> grad_in)>;

  NodeId constant(Tensor<T> value) { return push("constant", {}, std::move(value), false, {}); }
  NodeId variable(Tensor<T> value) { return push("variable", {}, std::move(value), true, {}); }

  NodeId record(std::string op, std::vector<NodeId> inputs, Tensor<T> value, BackwardFn backward) {
    bool needs = false;
    for (auto in : inputs) needs = needs || nodes_.at(in.index).requires_grad;
    return push(std::move(op), std::move(inputs), std::move(value), needs, std::move(backward));
  }

  const Tensor<T>& value(NodeId id) const { return nodes_.at(id.index).value; }
  const std::string& op(NodeId id) const { return nodes_.at(id.index).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id.index).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id.index).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Gradients<T> backward(NodeId loss) const;

  // Number of nodes whose backward closure ran in the last backward() call.
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    std::string op;
    std::vector<NodeId> inputs;
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  NodeId push(std::string op, std::vector<NodeId> inputs, Tensor<T> value, bool needs,
              BackwardFn backward) {
    nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(value), needs, std::move(backward)});
    return NodeId{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  mutable std::size_t last_visits_ = 0;
};

// ---- differentiable operations -------------------------------------------

template <typename T>
NodeId conv3d(Graph<T>& g, NodeId input, NodeId kernel, std::size_t stride, std::size_t padding);

// x[N, C, ...] + bias[C] broadcast over every non-channel axis.
template <typename T>
NodeId bias_add(Graph<T>& g, NodeId x, NodeId bias);

// x[N, K] * w[K, M] + b[M]
template <typename T>
NodeId dense(Graph<T>& g, NodeId x, NodeId weight, NodeId bias);

template <typename T>
NodeId relu(Graph<T>& g, NodeId x);

// 2x2x2 window, stride 2; spatial extents must be even.
template <typename T>
NodeId max_pool3d(Graph<T>& g, NodeId x);

// [N, C, D, H, W] -> [N, C]
template <typename T>
NodeId global_avg_pool(Graph<T>& g, NodeId x);

template <typename T>
NodeId upsample_nearest(Graph<T>& g, NodeId x);
template <typename T>
NodeId upsample_trilinear(Graph<T>& g, NodeId x);

template <typename T>
NodeId add(Graph<T>& g, NodeId a, NodeId b);
template <typename T>
NodeId sub(Graph<T>& g, NodeId a, NodeId b);
template <typename T>
NodeId mul(Graph<T>& g, NodeId a, NodeId b);
template <typename T>
NodeId scale(Graph<T>& g, NodeId x, T factor);

template <typename T>
NodeId reshape(Graph<T>& g, NodeId x, Shape shape);

// Concatenation along `axis`; all other extents must agree.
template <typename T>
NodeId concat(Graph<T>& g, std::span<const NodeId> parts, std::size_t axis);

template <typename T>
NodeId sum(Graph<T>& g, NodeId x);
template <typename T>
NodeId mean(Graph<T>& g, NodeId x);

// Row-wise over the last axis of a rank-2 tensor.
template <typename T>
NodeId softmax(Graph<T>& g, NodeId logits);
template <typename T>
NodeId log_softmax(Graph<T>& g, NodeId logits);

}  // namespace ttvi::ag
