// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gatectl/autodiff.hpp"

namespace gatectl {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-6;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  // The floor keeps round-off on near-zero gradients from reading as failure.
  double floor = 1e-4;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  std::size_t coordinates = 0;
  bool passed = false;
};

using ScalarFn = std::function<Var(std::span<const Var>)>;

/// Compares the tape gradient of scalar `f` against central differences on
/// every coordinate of every input. Throws NonFiniteError when f is not finite.
GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace gatectl
