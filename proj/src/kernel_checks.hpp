// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "gatectl/kernels.hpp"
#include "gatectl/tensor.hpp"

namespace gatectl::kernels::detail {

// Checks (m x k) * (k x n) -> (m x n) after transposes have been resolved.
inline void check_gemm(const char* name, std::size_t m, std::size_t k, std::size_t k2,
                       std::size_t n, const MatRef& c) {
  if (k != k2 || c.rows != m || c.cols != n) {
    throw DimensionError(std::string(name) + ": [" + std::to_string(m) + "x" + std::to_string(k) +
                         "] by [" + std::to_string(k2) + "x" + std::to_string(n) + "] into [" +
                         std::to_string(c.rows) + "x" + std::to_string(c.cols) + "]");
  }
}

inline void check_attention(const char* name, const ConstMatRef& q, const ConstMatRef& k,
                            const ConstMatRef& v, const MatRef& out) {
  if (q.cols != k.cols || k.rows != v.rows || out.rows != q.rows || out.cols != v.cols) {
    throw DimensionError(std::string(name) + ": q [" + std::to_string(q.rows) + "x" +
                         std::to_string(q.cols) + "], k [" + std::to_string(k.rows) + "x" +
                         std::to_string(k.cols) + "], v [" + std::to_string(v.rows) + "x" +
                         std::to_string(v.cols) + "]");
  }
}

}  // namespace gatectl::kernels::detail
