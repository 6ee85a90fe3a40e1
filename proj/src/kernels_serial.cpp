// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "gatectl/kernels.hpp"
#include "kernel_checks.hpp"

namespace gatectl::kernels::serial {

void gemm_nn(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate) {
  detail::check_gemm("gemm_nn", a.rows, a.cols, b.rows, b.cols, c);
  for (std::size_t i = 0; i < c.rows; ++i) {
    for (std::size_t j = 0; j < c.cols; ++j) {
      double s = accumulate ? c.data[i * c.cols + j] : 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a.data[i * a.cols + k] * b.data[k * b.cols + j];
      c.data[i * c.cols + j] = s;
    }
  }
}

void gemm_nt(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate) {
  detail::check_gemm("gemm_nt", a.rows, a.cols, b.cols, b.rows, c);
  for (std::size_t i = 0; i < c.rows; ++i) {
    for (std::size_t j = 0; j < c.cols; ++j) {
      double s = accumulate ? c.data[i * c.cols + j] : 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a.data[i * a.cols + k] * b.data[j * b.cols + k];
      c.data[i * c.cols + j] = s;
    }
  }
}

void gemm_tn(ConstMatRef a, ConstMatRef b, MatRef c, bool accumulate) {
  detail::check_gemm("gemm_tn", a.cols, a.rows, b.rows, b.cols, c);
  for (std::size_t i = 0; i < c.rows; ++i) {
    for (std::size_t j = 0; j < c.cols; ++j) {
      double s = accumulate ? c.data[i * c.cols + j] : 0.0;
      for (std::size_t k = 0; k < a.rows; ++k) s += a.data[k * a.cols + i] * b.data[k * b.cols + j];
      c.data[i * c.cols + j] = s;
    }
  }
}

void linear_attention(ConstMatRef q, ConstMatRef k, ConstMatRef v, bool normalized, double eps,
                      MatRef out) {
  detail::check_attention("linear_attention", q, k, v, out);
  const std::size_t n = q.rows, m = k.rows, d = q.cols, dv = v.cols;
  auto phi = [](double x) { return x > 0.0 ? x : 0.0; };

  std::vector<double> kv(d * dv, 0.0);
  std::vector<double> ksum(d, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t a = 0; a < d; ++a) {
      const double kja = phi(k.data[j * d + a]);
      ksum[a] += kja;
      for (std::size_t b = 0; b < dv; ++b) kv[a * dv + b] += kja * v.data[j * dv + b];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double den = 0.0;
    for (std::size_t a = 0; a < d; ++a) den += phi(q.data[i * d + a]) * ksum[a];
    den += eps;
    for (std::size_t b = 0; b < dv; ++b) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += phi(q.data[i * d + a]) * kv[a * dv + b];
      out.data[i * dv + b] = normalized ? s / den : s;
    }
  }
}

void softmax_attention(ConstMatRef q, ConstMatRef k, ConstMatRef v, MatRef out) {
  detail::check_attention("softmax_attention", q, k, v, out);
  const std::size_t n = q.rows, m = k.rows, d = q.cols, dv = v.cols;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> w(m);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += q.data[i * d + a] * k.data[j * d + a];
      w[j] = s * scale;
      mx = std::max(mx, w[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      w[j] = std::exp(w[j] - mx);
      z += w[j];
    }
    for (std::size_t b = 0; b < dv; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += w[j] * v.data[j * dv + b];
      out.data[i * dv + b] = s / z;
    }
  }
}

}  // namespace gatectl::kernels::serial
