// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gatectl/ops.hpp"

namespace gatectl {

FlowSample make_flow_sample(const Tensor& x0, Tensor x1, double t) {
  if (!x0.same_shape(x1)) {
    throw DimensionError("flow sample: x0 " + shape_str(x0.shape()) + " vs x1 " +
                         shape_str(x1.shape()));
  }
  FlowSample s;
  s.x0 = x0;
  s.t = t;
  s.x_t = Tensor(x0.shape());
  s.u_t = Tensor(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    s.x_t[i] = (1.0 - t) * x0[i] + t * x1[i];
    s.u_t[i] = x1[i] - x0[i];
  }
  s.x1 = std::move(x1);
  return s;
}

FlowSample make_flow_sample(const Tensor& x0, Rng& rng) {
  Tensor x1 = rng.normal_tensor(x0.shape());
  const double t = rng.uniform();
  return make_flow_sample(x0, std::move(x1), t);
}

Var fm_loss(const Var& predicted_velocity, const FlowSample& sample) {
  return mse(predicted_velocity, sample.u_t);
}

double fm_loss(const Tensor& predicted_velocity, const FlowSample& sample) {
  return fm_loss(Var(predicted_velocity), sample).value()[0];
}

// ---------------------------------------------------------------------------

void Adam::step(ModelParams& params) {
  ++steps_;
  for (auto& [name, p] : params) update(name, p);
}

void Adam::step(std::span<const std::pair<std::string, Var>> params) {
  ++steps_;
  for (auto [name, p] : params) update(name, p);
}

void Adam::update(const std::string& name, Var& param) {
  if (!param.requires_grad() || !param.has_grad()) return;
  Tensor& m = m_.try_emplace(name, Tensor::zeros(param.shape())).first->second;
  Tensor& v = v_.try_emplace(name, Tensor::zeros(param.shape())).first->second;
  const Tensor g = param.grad();
  auto w = param.mutable_value().data();
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
    v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    w[i] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * w[i]);
  }
}

double train_step(ModelParams& params, const ModelConfig& cfg,
                  std::span<const TrainExample> batch, Adam& opt) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  double loss_value = 0.0;
  {
    Tape tape;
    std::vector<Var> losses;
    losses.reserve(batch.size());
    for (const auto& ex : batch) {
      Conditioning cond;
      cond.image = ex.condition.empty() ? nullptr : &ex.condition;
      cond.class_id = ex.class_id;
      cond.dropped = ex.drop_condition;
      const Var pred = forward_patches(ex.flow.x_t, ex.flow.t, cond, params, cfg);
      losses.push_back(mse(pred, image_to_patches(ex.flow.u_t, cfg)));
    }
    const Var total = scale(sum(concat_rows(losses)), 1.0 / static_cast<double>(batch.size()));
    loss_value = total.value()[0];
    if (!std::isfinite(loss_value)) {
      throw NonFiniteError("train_step: non-finite loss at step " +
                           std::to_string(opt.steps() + 1));
    }
    tape.backward(total);
  }
  opt.step(params);
  return loss_value;
}

// ---------------------------------------------------------------------------

Tensor euler_sample(const VelocityFn& velocity, Tensor x1, const SampleOptions& options) {
  if (options.steps == 0) throw std::invalid_argument("euler_sample: steps must be >= 1");
  Tensor x = std::move(x1);
  const double dt = 1.0 / static_cast<double>(options.steps);
  const bool guided = options.guidance_scale != 1.0;
  for (std::size_t i = 0; i < options.steps; ++i) {
    const double t = 1.0 - static_cast<double>(i) * dt;
    Tensor v = velocity(x, t, true);
    if (guided) {
      const Tensor vu = velocity(x, t, false);
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = vu[j] + options.guidance_scale * (v[j] - vu[j]);
      }
    }
    for (std::size_t j = 0; j < x.size(); ++j) x[j] -= dt * v[j];
  }
  if (options.clamp_output) {
    for (auto& val : x.data()) val = std::clamp(val, 0.0, 1.0);
  }
  return x;
}

Tensor euler_sample(const VelocityFn& velocity, const Shape& shape, Rng& rng,
                    const SampleOptions& options) {
  return euler_sample(velocity, rng.normal_tensor(shape), options);
}

VelocityFn model_velocity(const ModelParams& params, const ModelConfig& cfg,
                          const Tensor* condition, std::size_t class_id) {
  return [&params, &cfg, condition, class_id](const Tensor& x, double t, bool conditional) {
    Conditioning cond;
    cond.image = condition;
    cond.class_id = class_id;
    cond.dropped = !conditional;
    return model_forward(x, t, cond, params, cfg);
  };
}

}  // namespace gatectl
