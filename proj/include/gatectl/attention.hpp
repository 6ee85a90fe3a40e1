// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "gatectl/linear.hpp"
#include "gatectl/rng.hpp"

namespace gatectl {

struct AttentionParams {
  Linear w_q, w_k, w_v;  // d_model -> n_heads * d_head
  Linear w_o;            // n_heads * d_head -> d_model
  std::size_t n_heads = 1;
  std::size_t d_head = 1;

  /// Normal init with std 1/sqrt(d_model).
  static AttentionParams init(std::size_t d_model, std::size_t n_heads, std::size_t d_head,
                              Rng& rng);
  void validate() const;
};

struct HeadProjections {
  std::vector<Var> q, k, v;  // one [n x d_head] entry per head
};

/// Q = XW_Q, K = XW_K, V = XW_V, split into heads.
HeadProjections project_qkv(const Var& x, const AttentionParams& p);

/// softmax(QK^T / sqrt(d)) V, the quadratic reference.
Var softmax_attention(const Var& q, const Var& k, const Var& v);

inline constexpr double kLinearAttentionEps = 1e-6;

/// relu(Q) (relu(K)^T V), evaluated right-to-left so only a d x d summary is
/// formed. When `normalized`, row i is divided by relu(q_i).sum_j relu(k_j) + eps.
Var linear_attention(const Var& q, const Var& k, const Var& v, bool normalized = true,
                     double eps = kLinearAttentionEps);

/// Multi-head linear self-attention over all rows of x, output-projected.
Var linear_self_attention(const Var& x, const AttentionParams& p, bool normalized = true);

class EmptySequenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Queries from x, keys/values from text; softmax attention, output-projected.
/// The caller adds the residual.
Var cross_attention(const Var& x, const Var& text, const AttentionParams& p);

}  // namespace gatectl
