// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "gatectl/autodiff.hpp"

namespace gatectl {

/// [m x k] * [k x n]. Backward: da = g b^T, db = a^T g.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

enum class ElementwiseKind { kAdd, kSub, kMul, kDiv };

/// `b` either matches `a` exactly or is an [n x 1] column broadcast across
/// the columns of `a` ([n x d]). Broadcast gradients are summed over columns.
Var elementwise(const Var& a, const Var& b, ElementwiseKind kind);
inline Var add(const Var& a, const Var& b) { return elementwise(a, b, ElementwiseKind::kAdd); }
inline Var sub(const Var& a, const Var& b) { return elementwise(a, b, ElementwiseKind::kSub); }
inline Var mul(const Var& a, const Var& b) { return elementwise(a, b, ElementwiseKind::kMul); }
inline Var div(const Var& a, const Var& b) { return elementwise(a, b, ElementwiseKind::kDiv); }

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

/// max(x, 0); the subgradient at exactly 0 is 0.
Var relu(const Var& x);
Var sigmoid(const Var& x);
/// x * sigmoid(1.702 x), the sigmoid approximation of GELU.
Var gelu(const Var& x);
Var silu(const Var& x);

Var softmax_rows(const Var& x);

/// Per-row normalization to zero mean / unit variance, then gain * x + bias.
/// gain and bias have `x.cols()` elements.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

Var sum(const Var& x);
Var mean(const Var& x);
/// mean((prediction - target)^2) over all elements.
Var mse(const Var& prediction, const Tensor& target);

Var slice_rows(const Var& x, std::size_t start, std::size_t count);
Var slice_cols(const Var& x, std::size_t start, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

/// Copying reshape; the gradient is reshaped back.
Var reshape(const Var& x, Shape shape);

}  // namespace gatectl
