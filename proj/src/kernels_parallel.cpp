// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gatectl/kernels.hpp"
#include "kernel_checks.hpp"

namespace gatectl::kernels {

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

using Index = std::ptrdiff_t;

// C[R x C] tile of c (+)= a * b with the tile held in registers. Sums run over
// k in ascending order, exactly as the serial reference does.
template <std::size_t R, std::size_t C>
inline void gemm_tile(const double* __restrict a, const double* __restrict b, double* __restrict c,
                      std::size_t k, std::size_t n, bool accumulate) {
  double t[R][C];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < C; ++j) t[r][j] = accumulate ? c[r * n + j] : 0.0;
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* brow = b + kk * n;
    for (std::size_t r = 0; r < R; ++r) {
      const double ar = a[r * k + kk];
      for (std::size_t j = 0; j < C; ++j) t[r][j] += ar * brow[j];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < C; ++j) c[r * n + j] = t[r][j];
}

template <std::size_t R>
void gemm_row_block(const double* a, const double* b, double* c, std::size_t k, std::size_t n,
                    bool accumulate) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) gemm_tile<R, 8>(a, b + j, c + j, k, n, accumulate);
  for (; j + 2 <= n; j += 2) gemm_tile<R, 2>(a, b + j, c + j, k, n, accumulate);
  for (; j < n; ++j) gemm_tile<R, 1>(a, b + j, c + j, k, n, accumulate);
}

constexpr std::size_t kRowBlock = 4;

void gemm_rows(const double* __restrict a, const double* __restrict b, double* __restrict c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto blocks = static_cast<Index>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (Index bi = 0; bi < blocks; ++bi) {
    const std::size_t i = static_cast<std::size_t>(bi) * kRowBlock;
    const double* ai = a + i * k;
    double* ci = c + i * n;
    switch (std::min(kRowBlock, m - i)) {
      case 4: gemm_row_block<4>(ai, b, ci, k, n, accumulate); break;
      case 3: gemm_row_block<3>(ai, b, ci, k, n, accumulate); break;
      case 2: gemm_row_block<2>(ai, b, ci, k, n, accumulate); break;
      default: gemm_row_block<1>(ai, b, ci, k, n, accumulate); break;
    }
  }
}

std::vector<double> transposed(std::span<const double> src, std::size_t rows, std::size_t cols) {
  std::vector<double> dst(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  return dst;
}

}  // namespace

void gemm_nn(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate) {
  detail::check_gemm("gemm_nn", a.rows, a.cols, b.rows, b.cols, c);
  gemm_rows(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols, b.cols, accumulate);
}

void gemm_nt(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate) {
  detail::check_gemm("gemm_nt", a.rows, a.cols, b.cols, b.rows, c);
  const auto bt = transposed(b.data, b.rows, b.cols);
  gemm_rows(a.data.data(), bt.data(), c.data.data(), a.rows, a.cols, b.rows, accumulate);
}

void gemm_tn(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate) {
  detail::check_gemm("gemm_tn", a.cols, a.rows, b.rows, b.cols, c);
  const auto at = transposed(a.data, a.rows, a.cols);
  gemm_rows(at.data(), b.data.data(), c.data.data(), a.cols, a.rows, b.cols, accumulate);
}

void linear_attention(ConstMatRef q, ConstMatRef k, ConstMatRef v, bool normalized, double eps,
                      MatRef out) {
  detail::check_attention("linear_attention", q, k, v, out);
  const std::size_t n = q.rows, m = k.rows, d = q.cols, dv = v.cols;

  // Summary relu(K)^T [V | 1]: d x (dv + 1), the last column holding sum_j relu(k_j).
  const std::size_t w = dv + 1;
  std::vector<double> kv(d * w, 0.0);
#pragma omp parallel for schedule(static) if (m * d * dv >= kParallelWork)
  for (Index aa = 0; aa < static_cast<Index>(d); ++aa) {
    const auto a = static_cast<std::size_t>(aa);
    double* __restrict row = kv.data() + a * w;
    for (std::size_t j = 0; j < m; ++j) {
      const double kja = std::max(k.data[j * d + a], 0.0);
      if (kja == 0.0) continue;
      const double* __restrict vrow = v.data.data() + j * dv;
      for (std::size_t b = 0; b < dv; ++b) row[b] += kja * vrow[b];
      row[dv] += kja;
    }
  }

#pragma omp parallel for schedule(static) if (n * d * dv >= kParallelWork)
  for (Index ii = 0; ii < static_cast<Index>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::vector<double> acc(w, 0.0);
    for (std::size_t a = 0; a < d; ++a) {
      const double qa = std::max(q.data[i * d + a], 0.0);
      if (qa == 0.0) continue;
      const double* __restrict row = kv.data() + a * w;
      for (std::size_t b = 0; b < w; ++b) acc[b] += qa * row[b];
    }
    double* orow = out.data.data() + i * dv;
    const double den = normalized ? acc[dv] + eps : 1.0;
    for (std::size_t b = 0; b < dv; ++b) orow[b] = acc[b] / den;
  }
}

void softmax_attention(ConstMatRef q, ConstMatRef k, ConstMatRef v, MatRef out) {
  detail::check_attention("softmax_attention", q, k, v, out);
  const std::size_t n = q.rows, m = k.rows, d = q.cols, dv = v.cols;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const auto kt = transposed(k.data, m, d);

#pragma omp parallel for schedule(static) if (n * m * d >= kParallelWork)
  for (Index ii = 0; ii < static_cast<Index>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::vector<double> s(m, 0.0);
    for (std::size_t a = 0; a < d; ++a) {
      const double qa = q.data[i * d + a];
      const double* __restrict krow = kt.data() + a * m;
      for (std::size_t j = 0; j < m; ++j) s[j] += qa * krow[j];
    }
    double mx = -INFINITY;
    for (auto& x : s) {
      x *= scale;
      mx = std::max(mx, x);
    }
    double z = 0.0;
    for (auto& x : s) {
      x = std::exp(x - mx);
      z += x;
    }
    double* __restrict orow = out.data.data() + i * dv;
    std::fill(orow, orow + dv, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double wj = s[j];
      const double* __restrict vrow = v.data.data() + j * dv;
      for (std::size_t b = 0; b < dv; ++b) orow[b] += wj * vrow[b];
    }
    for (std::size_t b = 0; b < dv; ++b) orow[b] /= z;
  }
}

}  // namespace parallel
}  // namespace gatectl::kernels
