// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "gatectl/autodiff.hpp"
#include "gatectl/ops.hpp"

namespace gatectl {

/// Low-rank delta A [d_in x r] * B [r x d_out]; effective weight W + scale*A*B.
struct LoRAPair {
  Var a;
  Var b;
  double scale = 1.0;

  std::size_t rank() const { return a.cols(); }
};

/// W_frozen + scale * A * B. Throws DimensionError on rank/shape mismatch.
Var lora_apply(const Var& w_frozen, const LoRAPair& pair);

/// Bias-free projection x * W, with an optional unmerged LoRA path
/// x * W + scale * (x * A) * B.
struct Linear {
  Var weight;
  std::optional<LoRAPair> lora;

  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
  Var operator()(const Var& x) const;
};

}  // namespace gatectl
