// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gatectl/kernels.hpp"

namespace gatectl {

namespace k = kernels::parallel;

namespace {

kernels::ConstMatRef cref(const Tensor& t) { return {t.data(), t.rows(), t.cols()}; }
kernels::MatRef mref(Tensor& t) { return {t.data(), t.rows(), t.cols()}; }

bool is_column_of(const Tensor& b, const Tensor& a) {
  return b.rank() == 2 && b.cols() == 1 && b.rows() == a.rows() && a.rank() == 2;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F, typename D>
Var unary(const Var& x, F f, D df) {
  Tensor out(x.shape());
  auto xv = x.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(xv[i]);
  return make_op(std::move(out), {x}, [df](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto g = self.grad.data();
    auto xs = in.value.data();
    auto ys = self.value.data();
    auto dst = in.grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * df(xs[i], ys[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(av.shape()) + " by " +
                         shape_str(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  k::gemm_nn(cref(av), cref(bv), mref(out), false);
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    if (na.requires_grad) {
      Tensor& ga = na.grad_buffer();
      k::gemm_nt(cref(self.grad), cref(nb.value), {ga.data(), na.value.rows(), na.value.cols()},
                 true);
    }
    if (nb.requires_grad) {
      Tensor& gb = nb.grad_buffer();
      k::gemm_tn(cref(na.value), cref(self.grad), {gb.data(), nb.value.rows(), nb.value.cols()},
                 true);
    }
  });
}

Var transpose(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  return make_op(std::move(out), {a}, [r, c](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto dst = in.grad_buffer().data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[i * c + j] += self.grad.at(j, i);
  });
}

Var elementwise(const Var& a, const Var& b, ElementwiseKind kind) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool same = av.same_shape(bv);
  const bool column = !same && is_column_of(bv, av);
  if (!same && !column) {
    throw DimensionError("elementwise: incompatible shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()));
  }
  const std::size_t cols = av.cols();
  auto bidx = [same, cols](std::size_t i) { return same ? i : i / cols; };

  Tensor out(av.shape());
  auto o = out.data();
  auto x = av.data();
  auto y = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double yb = y[bidx(i)];
    switch (kind) {
      case ElementwiseKind::kAdd: o[i] = x[i] + yb; break;
      case ElementwiseKind::kSub: o[i] = x[i] - yb; break;
      case ElementwiseKind::kMul: o[i] = x[i] * yb; break;
      case ElementwiseKind::kDiv: o[i] = x[i] / yb; break;
    }
  }

  return make_op(std::move(out), {a, b}, [kind, bidx](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    auto g = self.grad.data();
    auto x = na.value.data();
    auto y = nb.value.data();
    if (na.requires_grad) {
      auto ga = na.grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case ElementwiseKind::kAdd:
          case ElementwiseKind::kSub: ga[i] += g[i]; break;
          case ElementwiseKind::kMul: ga[i] += g[i] * y[bidx(i)]; break;
          case ElementwiseKind::kDiv: ga[i] += g[i] / y[bidx(i)]; break;
        }
      }
    }
    if (nb.requires_grad) {
      auto gb = nb.grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t j = bidx(i);
        switch (kind) {
          case ElementwiseKind::kAdd: gb[j] += g[i]; break;
          case ElementwiseKind::kSub: gb[j] -= g[i]; break;
          case ElementwiseKind::kMul: gb[j] += g[i] * x[i]; break;
          case ElementwiseKind::kDiv: gb[j] -= g[i] * x[i] / (y[j] * y[j]); break;
        }
      }
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(x, stable_sigmoid, [](double, double s) { return s * (1.0 - s); });
}

Var gelu(const Var& x) {
  constexpr double c = 1.702;
  return unary(
      x, [](double v) { return v * stable_sigmoid(c * v); },
      [](double v, double) {
        const double s = stable_sigmoid(c * v);
        return s + c * v * s * (1.0 - s);
      });
}

Var silu(const Var& x) {
  return unary(
      x, [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s + v * s * (1.0 - s);
      });
}

Var softmax_rows(const Var& x) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, xv.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(xv.at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= z;
  }
  return make_op(std::move(out), {x}, [r, c](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& gx = in.grad_buffer();
    const Tensor& y = self.value;
    const Tensor& g = self.grad;
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < c; ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: input " + shape_str(xv.shape()) + " with gain " +
                         shape_str(gain.shape()) + " and bias " + shape_str(bias.shape()));
  }
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(n);
  Tensor out(xv.shape());
  auto gv = gain.value().data();
  auto bv = bias.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv.at(i, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv.at(i, j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat.at(i, j) = (xv.at(i, j) - mu) * inv_std[i];
      out.at(i, j) = gv[j] * xhat.at(i, j) + bv[j];
    }
  }
  return make_op(std::move(out), {x, gain, bias},
                 [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                   Node& nx = *self.inputs[0];
                   Node& ng = *self.inputs[1];
                   Node& nb = *self.inputs[2];
                   const Tensor& g = self.grad;
                   if (ng.requires_grad) {
                     auto gg = ng.grad_buffer().data();
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < d; ++j) gg[j] += g.at(i, j) * xhat.at(i, j);
                   }
                   if (nb.requires_grad) {
                     auto gb = nb.grad_buffer().data();
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < d; ++j) gb[j] += g.at(i, j);
                   }
                   if (nx.requires_grad) {
                     Tensor& gx = nx.grad_buffer();
                     auto gain_v = ng.value.data();
                     const double inv_d = 1.0 / static_cast<double>(d);
                     for (std::size_t i = 0; i < n; ++i) {
                       double s1 = 0.0, s2 = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                         const double dxh = g.at(i, j) * gain_v[j];
                         s1 += dxh;
                         s2 += dxh * xhat.at(i, j);
                       }
                       for (std::size_t j = 0; j < d; ++j) {
                         const double dxh = g.at(i, j) * gain_v[j];
                         gx.at(i, j) +=
                             inv_std[i] * (dxh - s1 * inv_d - xhat.at(i, j) * s2 * inv_d);
                       }
                     }
                   }
                 });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_op(Tensor::scalar(s), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const double g = self.grad[0];
    for (auto& v : in.grad_buffer().data()) v += g;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var mse(const Var& prediction, const Tensor& target) {
  const Tensor& p = prediction.value();
  if (!p.same_shape(target)) {
    throw DimensionError("mse: prediction " + shape_str(p.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double e = p[i] - target[i];
    s += e * e;
  }
  const double inv_n = 1.0 / static_cast<double>(p.size());
  return make_op(Tensor::scalar(s * inv_n), {prediction}, [target, inv_n](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const double g = self.grad[0] * 2.0 * inv_n;
    auto dst = in.grad_buffer().data();
    auto pv = in.value.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g * (pv[i] - target[i]);
  });
}

Var slice_rows(const Var& x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  if (count == 0 || start + count > xv.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") of " + shape_str(xv.shape()));
  }
  const std::size_t c = xv.cols();
  Tensor out({count, c});
  std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(start * c), count * c,
              out.data().begin());
  return make_op(std::move(out), {x}, [start, c](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto dst = in.grad_buffer().data().subspan(start * c, self.grad.size());
    auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var slice_cols(const Var& x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (count == 0 || start + count > c) {
    throw DimensionError("slice_cols: cols [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") of " + shape_str(xv.shape()));
  }
  Tensor out({r, count});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = xv.at(i, start + j);
  return make_op(std::move(out), {x}, [r, c, start, count](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto dst = in.grad_buffer().data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) dst[i * c + start + j] += self.grad.at(i, j);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows: " + shape_str(parts.front().shape()) + " and " +
                           shape_str(p.shape()));
    }
    r += p.rows();
  }
  Tensor out({r, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.size();
  }
  return make_op(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      const std::size_t len = in->value.size();
      if (in->requires_grad) {
        auto dst = in->grad_buffer().data();
        for (std::size_t i = 0; i < len; ++i) dst[i] += self.grad[off + i];
      }
      off += len;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError("concat_cols: " + shape_str(parts.front().shape()) + " and " +
                           shape_str(p.shape()));
    }
    c += p.cols();
  }
  Tensor out({r, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j) out.at(i, off + j) = p.value().at(i, j);
    off += pc;
  }
  return make_op(std::move(out), parts, [r, c](Node& self) {
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      const std::size_t pc = in->value.cols();
      if (in->requires_grad) {
        auto dst = in->grad_buffer().data();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < pc; ++j) dst[i * pc + j] += self.grad[i * c + off + j];
      }
      off += pc;
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_op(std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto dst = in.grad_buffer().data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i];
  });
}

}  // namespace gatectl
