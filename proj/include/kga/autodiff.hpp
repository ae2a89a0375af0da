#pragma once

// Tape-based reverse-mode differentiation over dense double tensors.
//
// A Graph owns every node created during one forward pass. Nodes may only
// reference earlier nodes, so creation order is a topological order and
// backward() is a single reverse sweep. Leaves keep their gradients across
// backward() calls (accumulation); intermediate gradients are rebuilt each
// call. One Graph is used by one thread at a time.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "kga/tensor.hpp"

namespace kga::ad {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the Graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const TensorD& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  /// Propagates the gradient of node `self` into the gradients of its inputs.
  using Backprop = std::function<void(Graph& graph, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(TensorD value);
  /// Differentiable input; its gradient survives and accumulates across backward() calls.
  Var leaf(TensorD value);

  void backward(Var loss);
  void zero_grad();

  /// Gradient of `v` from the most recent backward(); zeros if it received none.
  Eigen::ArrayXd grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-implementer interface.
  Var record(TensorD value, std::vector<std::size_t> inputs, Backprop backprop);
  const TensorD& value_at(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Eigen::ArrayXd& grad_at(std::size_t id) const { return nodes_[id].grad; }
  /// Zero-initialized on first access.
  Eigen::ArrayXd& grad_buffer(std::size_t id);
  std::size_t id_of(Var v) const;

 private:
  struct Node {
    TensorD value;
    Eigen::ArrayXd grad;
    std::vector<std::size_t> inputs;
    Backprop backprop;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  std::deque<Node> nodes_;  // stable references across growth
};

inline const TensorD& Var::value() const { return graph_->value_at(id_); }

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
/// Elementwise product.
Var operator*(Var a, Var b);
Var scale(Var x, double factor);
Var sum(Var x);

Var sigmoid(Var x);

/// Same-padded 2-d convolution: C_in×H×W input, C_out×C_in×k×k kernel,
/// optional C_out bias.
Var conv2d(Var input, Var kernel, std::optional<Var> bias = std::nullopt);

/// Per-cell channel mixing: C_out×C_in weight applied to every cell of a C_in×H×W field.
Var channel_matmul(Var weight, Var input);
Var add_channel_bias(Var input, Var bias);
Var concat_channels(Var a, Var b);

/// Softmax across the channel axis of a 2×H×W field.
Var softmax_channels(Var logits);
/// Channel `c` of a C×H×W field as an H×W tensor.
Var select_channel(Var x, Index c);

/// Mean per-cell binary cross entropy of H×W probabilities against a binary
/// H×W target, probabilities clamped to [1e-7, 1-1e-7].
Var bce_loss(Var p, const TensorD& target);

}  // namespace kga::ad
