// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Rectified flow. The interpolant runs from data (t = 0) to noise (t = 1):
//   x_t = (1 - t) x0 + t x1,   u_t = x1 - x0,
// and sampling integrates dx/dt = v from t = 1 down to t = 0.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gatectl/model.hpp"
#include "gatectl/rng.hpp"

namespace gatectl {

struct FlowSample {
  Tensor x0;
  Tensor x1;
  double t = 0.0;
  Tensor x_t;
  Tensor u_t;
};

/// Draws x1 ~ N(0, I) and t ~ U[0, 1].
FlowSample make_flow_sample(const Tensor& x0, Rng& rng);
FlowSample make_flow_sample(const Tensor& x0, Tensor x1, double t);

/// Mean squared error between the predicted and target velocity.
Var fm_loss(const Var& predicted_velocity, const FlowSample& sample);
double fm_loss(const Tensor& predicted_velocity, const FlowSample& sample);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Moment buffers are keyed by parameter
/// name and created on first use.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Updates every requires_grad parameter that holds a gradient.
  void step(ModelParams& params);
  void step(std::span<const std::pair<std::string, Var>> params);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  void update(const std::string& name, Var& param);

  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

struct TrainExample {
  Tensor condition;  // empty for condition-free training
  std::size_t class_id = 0;
  bool drop_condition = false;
  FlowSample flow;
};

/// One optimizer step on the mean flow-matching loss over `batch`. Returns the
/// batch loss. Throws NonFiniteError naming the step index on a non-finite loss.
double train_step(ModelParams& params, const ModelConfig& cfg,
                  std::span<const TrainExample> batch, Adam& opt);

/// Velocity at (x, t); `conditional` selects the conditional or unconditional
/// pathway for guidance.
using VelocityFn = std::function<Tensor(const Tensor& x, double t, bool conditional)>;

struct SampleOptions {
  std::size_t steps = 20;
  double guidance_scale = 1.0;
  bool clamp_output = true;  // clamp to [0, 1] once, after the last step
};

/// Euler integration from x1 at t = 1 to t = 0 with dt = 1/steps. With
/// guidance g != 1 the velocity is v_u + g (v_c - v_u).
Tensor euler_sample(const VelocityFn& velocity, Tensor x1, const SampleOptions& options);
Tensor euler_sample(const VelocityFn& velocity, const Shape& shape, Rng& rng,
                    const SampleOptions& options);

/// Velocity function of a model for one condition.
VelocityFn model_velocity(const ModelParams& params, const ModelConfig& cfg,
                          const Tensor* condition, std::size_t class_id);

}  // namespace gatectl
