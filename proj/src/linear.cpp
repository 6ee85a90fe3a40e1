// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/linear.hpp"

namespace gatectl {

namespace {

void check_pair(const Var& w, const LoRAPair& pair) {
  if (pair.a.rows() != w.rows() || pair.b.cols() != w.cols() || pair.a.cols() != pair.b.rows()) {
    throw DimensionError("lora: weight " + shape_str(w.shape()) + " with A " +
                         shape_str(pair.a.shape()) + " and B " + shape_str(pair.b.shape()));
  }
}

}  // namespace

Var lora_apply(const Var& w_frozen, const LoRAPair& pair) {
  check_pair(w_frozen, pair);
  return add(w_frozen, scale(matmul(pair.a, pair.b), pair.scale));
}

Var Linear::operator()(const Var& x) const {
  Var y = matmul(x, weight);
  if (!lora) return y;
  check_pair(weight, *lora);
  return add(y, scale(matmul(matmul(x, lora->a), lora->b), lora->scale));
}

}  // namespace gatectl
