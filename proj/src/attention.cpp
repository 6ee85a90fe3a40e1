// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/attention.hpp"

#include <cmath>

namespace gatectl {

AttentionParams AttentionParams::init(std::size_t d_model, std::size_t n_heads,
                                      std::size_t d_head, Rng& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(d_model));
  const std::size_t inner = n_heads * d_head;
  AttentionParams p;
  p.w_q.weight = Var(rng.normal_tensor({d_model, inner}, std));
  p.w_k.weight = Var(rng.normal_tensor({d_model, inner}, std));
  p.w_v.weight = Var(rng.normal_tensor({d_model, inner}, std));
  p.w_o.weight = Var(rng.normal_tensor({inner, d_model}, std));
  p.n_heads = n_heads;
  p.d_head = d_head;
  return p;
}

void AttentionParams::validate() const {
  const std::size_t inner = n_heads * d_head;
  const std::size_t d_model = w_q.in_features();
  const bool ok = n_heads > 0 && d_head > 0 && w_q.out_features() == inner &&
                  w_k.out_features() == inner && w_v.out_features() == inner &&
                  w_k.in_features() == d_model && w_v.in_features() == d_model &&
                  w_o.in_features() == inner && w_o.out_features() == d_model;
  if (!ok) {
    throw DimensionError("attention params: W_Q " + shape_str(w_q.weight.shape()) + ", W_K " +
                         shape_str(w_k.weight.shape()) + ", W_V " + shape_str(w_v.weight.shape()) +
                         ", W_O " + shape_str(w_o.weight.shape()) + " with " +
                         std::to_string(n_heads) + " heads of " + std::to_string(d_head));
  }
}

namespace {

std::vector<Var> split_heads(const Var& x, std::size_t n_heads, std::size_t d_head) {
  std::vector<Var> out;
  out.reserve(n_heads);
  if (n_heads == 1) {
    out.push_back(x);
    return out;
  }
  for (std::size_t h = 0; h < n_heads; ++h) out.push_back(slice_cols(x, h * d_head, d_head));
  return out;
}

Var merge_heads(const std::vector<Var>& heads) {
  return heads.size() == 1 ? heads.front() : concat_cols(heads);
}

void check_width(const Var& x, const AttentionParams& p) {
  if (x.cols() != p.w_q.in_features()) {
    throw DimensionError("attention input " + shape_str(x.shape()) + " does not match W_Q " +
                         shape_str(p.w_q.weight.shape()));
  }
}

}  // namespace

HeadProjections project_qkv(const Var& x, const AttentionParams& p) {
  p.validate();
  check_width(x, p);
  return {split_heads(p.w_q(x), p.n_heads, p.d_head), split_heads(p.w_k(x), p.n_heads, p.d_head),
          split_heads(p.w_v(x), p.n_heads, p.d_head)};
}

Var softmax_attention(const Var& q, const Var& k, const Var& v) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw DimensionError("softmax_attention: Q " + shape_str(q.shape()) + ", K " +
                         shape_str(k.shape()) + ", V " + shape_str(v.shape()));
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return matmul(softmax_rows(scale(matmul(q, transpose(k)), s)), v);
}

Var linear_attention(const Var& q, const Var& k, const Var& v, bool normalized, double eps) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw DimensionError("linear_attention: Q " + shape_str(q.shape()) + ", K " +
                         shape_str(k.shape()) + ", V " + shape_str(v.shape()));
  }
  const Var phi_q = relu(q);
  const Var phi_k_t = transpose(relu(k));
  const Var summary = matmul(phi_k_t, v);  // d x dv
  const Var num = matmul(phi_q, summary);
  if (!normalized) return num;
  const Var ones(Tensor::ones({k.rows(), 1}));
  const Var key_sum = matmul(phi_k_t, ones);  // d x 1
  return div(num, add_scalar(matmul(phi_q, key_sum), eps));
}

Var linear_self_attention(const Var& x, const AttentionParams& p, bool normalized) {
  const HeadProjections h = project_qkv(x, p);
  std::vector<Var> heads;
  heads.reserve(p.n_heads);
  for (std::size_t i = 0; i < p.n_heads; ++i) {
    heads.push_back(linear_attention(h.q[i], h.k[i], h.v[i], normalized));
  }
  return p.w_o(merge_heads(heads));
}

Var cross_attention(const Var& x, const Var& text, const AttentionParams& p) {
  if (!text.defined() || text.size() == 0) {
    throw EmptySequenceError("cross_attention: empty text sequence");
  }
  p.validate();
  check_width(x, p);
  check_width(text, p);
  const auto q = split_heads(p.w_q(x), p.n_heads, p.d_head);
  const auto k = split_heads(p.w_k(text), p.n_heads, p.d_head);
  const auto v = split_heads(p.w_v(text), p.n_heads, p.d_head);
  std::vector<Var> heads;
  heads.reserve(p.n_heads);
  for (std::size_t i = 0; i < p.n_heads; ++i) heads.push_back(softmax_attention(q[i], k[i], v[i]));
  return p.w_o(merge_heads(heads));
}

}  // namespace gatectl
