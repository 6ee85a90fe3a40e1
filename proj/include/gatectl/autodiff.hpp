// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Reverse-mode automatic differentiation.
//
// A `Tape` installs itself as the thread's active tape for its lifetime. Every
// operation whose inputs require gradients is appended to the active tape;
// with no active tape, operations only compute values (inference mode).
// `Tape::backward` replays the recorded operations in reverse order.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gatectl/tensor.hpp"

namespace gatectl {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;  // empty for leaves

  bool is_leaf() const { return !backward; }
  Tensor& grad_buffer();
};

/// Handle to a tensor participating in differentiation. Copies share the
/// same node, so an optimizer can update a parameter in place through any
/// handle.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; a zero tensor of the value's shape when never written.
  Tensor grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

enum class GradMode {
  kOverwrite,   // leaf gradients are reset before the backward sweep
  kAccumulate,  // leaf gradients add onto what earlier tapes left there
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(NodePtr node) { ops_.push_back(std::move(node)); }
  std::size_t size() const { return ops_.size(); }

  /// Fills the gradient of every requires_grad leaf reachable from `loss`.
  /// Repeated calls with kOverwrite yield the same gradients.
  void backward(const Var& loss, GradMode mode = GradMode::kOverwrite);

 private:
  std::vector<NodePtr> ops_;
  Tape* previous_ = nullptr;
};

/// Records an operation with a custom backward rule. Building block for every
/// op in ops.hpp; also used by tests to inject a deliberately wrong rule.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward);

/// Adds `g` into the gradient of `n` when `n` participates in differentiation.
void accumulate_grad(Node& n, const Tensor& g);

}  // namespace gatectl
