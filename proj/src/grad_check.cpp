// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gatectl {

namespace {

double evaluate(const ScalarFn& f, std::span<const Var> vars) {
  const Var out = f(vars);
  if (out.size() != 1) throw DimensionError("grad_check: f must be scalar-valued");
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw NonFiniteError("grad_check: f evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");

  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (auto& t : inputs) vars.emplace_back(std::move(t), true);

  std::vector<Tensor> analytic;
  {
    Tape tape;
    const Var out = f(vars);
    if (out.size() != 1) throw DimensionError("grad_check: f must be scalar-valued");
    if (!std::isfinite(out.value()[0])) {
      throw NonFiniteError("grad_check: f evaluated to a non-finite value");
    }
    tape.backward(out);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }

  GradCheckReport report;
  for (std::size_t vi = 0; vi < vars.size(); ++vi) {
    auto data = vars[vi].mutable_value().data();
    for (std::size_t e = 0; e < data.size(); ++e) {
      const double saved = data[e];
      data[e] = saved + options.eps;
      const double fp = evaluate(f, vars);
      data[e] = saved - options.eps;
      const double fm = evaluate(f, vars);
      data[e] = saved;

      const double numeric = (fp - fm) / (2.0 * options.eps);
      const double a = analytic[vi][e];
      const double abs_err = std::abs(a - numeric);
      const double rel_err =
          abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err > report.max_rel_error) {
        report.max_rel_error = rel_err;
        report.worst_input = vi;
        report.worst_element = e;
      }
      ++report.coordinates;
    }
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

}  // namespace gatectl
