// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense compute kernels on raw row-major buffers.
//
// serial::   textbook loops. Kept as the reference the tests and the kernel
//            benchmark compare against; nothing on the training path uses it.
// parallel:: cache-friendly loop order, OpenMP over output rows. Each output
//            element is produced by exactly one thread with a fixed summation
//            order, so results do not depend on the thread count.

#include <cstddef>
#include <span>

namespace gatectl::kernels {

struct MatRef {
  std::span<double> data;
  std::size_t rows;
  std::size_t cols;
};

struct ConstMatRef {
  std::span<const double> data;
  std::size_t rows;
  std::size_t cols;
};

namespace serial {

// c (+)= a * b with a:[m x k], b:[k x n].
void gemm_nn(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate);
// c (+)= a * b^T with a:[m x k], b:[n x k].
void gemm_nt(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate);
// c (+)= a^T * b with a:[k x m], b:[k x n].
void gemm_tn(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate);

// relu(q) (relu(k)^T v). When normalized, row i is divided by
// relu(q_i) . sum_j relu(k_j) + eps.
void linear_attention(ConstMatRef q, ConstMatRef k, ConstMatRef v, bool normalized,
                      double eps, MatRef out);
// softmax(q k^T / sqrt(d)) v with row-max stabilization.
void softmax_attention(ConstMatRef q, ConstMatRef k, ConstMatRef v, MatRef out);

}  // namespace serial

namespace parallel {

void gemm_nn(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate);
void gemm_nt(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate);
void gemm_tn(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate);
void linear_attention(ConstMatRef q, ConstMatRef k, ConstMatRef v, bool normalized,
                      double eps, MatRef out);
void softmax_attention(ConstMatRef q, ConstMatRef k, ConstMatRef v, MatRef out);

}  // namespace parallel

/// True when parallel:: was compiled with OpenMP.
bool openmp_enabled();
int max_threads();

}  // namespace gatectl::kernels
