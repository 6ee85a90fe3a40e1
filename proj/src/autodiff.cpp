// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/autodiff.hpp"

#include <stdexcept>

namespace gatectl {

namespace {
thread_local Tape* g_current_tape = nullptr;
}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor::zeros(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor::zeros(node_->value.shape());
  return node_->grad;
}

Tape::Tape() : previous_(g_current_tape) { g_current_tape = this; }

Tape::~Tape() { g_current_tape = previous_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::backward(const Var& loss, GradMode mode) {
  if (!loss.defined() || loss.size() != 1) {
    throw DimensionError("backward: loss must be a scalar, got shape " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss is not connected to any requires_grad input");
  }

  for (auto& op : ops_) {
    op->grad = Tensor();
    if (mode == GradMode::kOverwrite) {
      for (auto& in : op->inputs) {
        if (in->is_leaf() && in->requires_grad) in->grad = Tensor::zeros(in->value.shape());
      }
    }
  }
  Node* root = loss.node();
  if (root->is_leaf()) {
    root->grad = Tensor::ones(root->value.shape());
    return;
  }
  root->grad_buffer()[0] = 1.0;

  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.empty()) continue;  // not upstream of the loss
    n.backward(n);
  }
}

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  Tape* tape = Tape::current();
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (needs_grad && tape != nullptr) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Var(std::move(node));
}

void accumulate_grad(Node& n, const Tensor& g) {
  if (!n.requires_grad) return;
  Tensor& buf = n.grad_buffer();
  if (buf.size() != g.size()) {
    throw DimensionError("gradient shape " + shape_str(g.shape()) + " for value " +
                         shape_str(n.value.shape()));
  }
  auto dst = buf.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace gatectl
