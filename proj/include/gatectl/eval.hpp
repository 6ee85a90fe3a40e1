// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Metrics, training runs and the comparison experiments built on them.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gatectl/data.hpp"
#include "gatectl/flow.hpp"
#include "gatectl/model.hpp"

namespace gatectl {

// ---------------------------------------------------------------------------
// Metrics

/// F1 between two binary [S x S] edge maps. A generated edge counts as a hit
/// if a reference edge lies within `tolerance` pixels (Chebyshev), and vice
/// versa for recall. Two empty maps match (F1 = 1).
double edge_f1_maps(const Tensor& generated_edges, const Tensor& reference_edges,
                    std::size_t tolerance = 1);
/// Edge F1 of an image against a binary edge condition ([3 x S x S] or [S x S]).
double edge_f1(const Tensor& generated, const Tensor& condition_edge);
/// MSE between the task's condition operator applied to `generated` and the
/// reference condition.
double mse_metric(const Tensor& generated, const Tensor& reference_condition, TaskKind task);
double mse(const Tensor& a, const Tensor& b);
/// 10 log10(1 / mse), capped at 99 dB.
double psnr(const Tensor& a, const Tensor& b);
inline constexpr double kPsnrCap = 99.0;

struct EvalMetrics {
  double edge_f1 = 0.0;  // NaN unless the task is edge
  double mse = 0.0;      // NaN for the subject task
  double psnr = 0.0;
};

struct EvalOptions {
  std::size_t samples = 8;
  SampleOptions sampler;
  std::uint64_t seed = 0;
  // false: sample without the condition image (an unconditional model).
  bool use_condition = true;
};

/// Samples `options.samples` images for a fixed evaluation set and averages
/// the metrics against its conditions and targets.
EvalMetrics evaluate(const ModelParams& params, const ModelConfig& cfg, TaskKind task,
                     const EvalOptions& options);

// ---------------------------------------------------------------------------
// Training runs

struct RunSpec {
  std::string name = "run";
  ModelConfig model;
  TaskKind task = TaskKind::kEdge;
  TrainMode mode = TrainMode::kFinetune;
  std::size_t steps = 2000;
  std::size_t batch_size = 2;
  std::uint64_t seed = 0;
  AdamConfig adam;
  double condition_dropout = 0.1;
  std::size_t eval_interval = 0;  // 0: no periodic evaluation
  EvalOptions eval;
};

inline constexpr double kSmoothingAlpha = 0.05;

struct MetricsRow {
  std::size_t step = 0;  // 1-based count of completed steps
  double loss_smoothed = 0.0;
  double loss_raw = 0.0;
  std::optional<EvalMetrics> metrics;
};

struct RunRecord {
  RunSpec spec;
  std::vector<MetricsRow> rows;
  std::optional<EvalMetrics> final_metrics;
  double wall_seconds = 0.0;
  bool diverged = false;
  std::string error;

  std::vector<double> losses() const;
  double final_loss() const;  // last smoothed loss, NaN when no steps ran
};

/// Exponential smoothing s_i = (1 - a) s_{i-1} + a x_i seeded with x_0.
std::vector<double> smooth(const std::vector<double>& xs, double alpha = kSmoothingAlpha);
double loss_auc(const std::vector<double>& losses);
/// First 1-based step whose smoothed loss is below tau.
std::optional<std::size_t> steps_to_threshold(const std::vector<double>& smoothed, double tau);

/// Called after every eval_interval steps and at the end, with the step count.
using StepCallback = std::function<void(std::size_t step, const ModelParams& params)>;

/// Pretrain and scratch runs start from `base` when given, else from
/// init_params(seed); fine-tuning starts from a copy of `base` with LoRA and
/// gate parameters added and the backbone frozen.
/// The data, noise and dropout streams depend only on the seed, so runs that
/// differ in GateSpec see identical batches. A non-finite loss marks the
/// record diverged instead of throwing.
RunRecord train_run(const RunSpec& spec, const ModelParams* base = nullptr,
                    ModelParams* trained = nullptr, const StepCallback& on_checkpoint = {});

/// Fresh parameters for `spec`: init or copy of base, gates synced to the
/// spec, LoRA pairs in fine-tune mode, trainability set.
ModelParams prepare_params(const RunSpec& spec, const ModelParams* base);

// ---------------------------------------------------------------------------
// Experiments

struct NamedSpec {
  std::string name;
  GateSpec gate;
};

struct ConvergenceReport {
  std::vector<std::string> specs;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<RunRecord>> runs;                    // [spec][seed]
  std::vector<std::vector<double>> auc;                        // [spec][seed]
  std::vector<std::vector<std::optional<std::size_t>>> steps;  // [spec][seed]
  std::vector<double> tau;                                     // [seed]
  std::vector<std::vector<double>> mean_loss;                  // [spec][step]
};

/// Trains every spec on every seed. The first spec is the reference whose
/// final smoothed loss sets tau = 1.05 x final loss per seed.
ConvergenceReport convergence_compare(const RunSpec& base_spec, const std::vector<NamedSpec>& specs,
                                      const std::vector<std::uint64_t>& seeds,
                                      const ModelParams* base = nullptr, std::size_t jobs = 1);
inline constexpr double kThresholdFactor = 1.05;

struct OverheadRow {
  std::string name;
  std::size_t params = 0;
  double ratio = 0.0;  // params / backbone
};

struct OverheadReport {
  std::vector<OverheadRow> rows;  // backbone, lora, gate
  std::size_t backbone = 0;
  std::size_t lora = 0;
  std::size_t gate = 0;
  double gate_ratio() const;
  bool gate_within_budget() const { return gate_ratio() < 0.001; }
};

OverheadReport overhead_report(const ModelConfig& cfg);

/// Rows of Table 3 in order, the last being the default spec.
std::vector<NamedSpec> table3_variants(const GateSpec& ours = {});
/// Cartesian product of the named axes ("gating", "granularity", "position",
/// "score_source", "interaction") around `ours`; "table3" expands to
/// table3_variants. Throws std::invalid_argument on no or unknown axes.
std::vector<NamedSpec> ablation_variants(const std::vector<std::string>& axes,
                                         const GateSpec& ours = {});

struct GridRow {
  std::string variant;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  EvalMetrics metrics;
  std::optional<std::size_t> steps_to_threshold;
  bool diverged = false;
  std::string error;
};

/// One run per (variant, seed), rows ordered by variant then seed. tau comes
/// from the variant whose spec equals base_spec's gate when present, else the
/// last variant. `records`, when given, receives the runs in row order.
std::vector<GridRow> ablation_grid(const RunSpec& base_spec, const std::vector<NamedSpec>& variants,
                                   const std::vector<std::uint64_t>& seeds,
                                   const ModelParams* base = nullptr, std::size_t jobs = 1,
                                   std::vector<RunRecord>* records = nullptr);

}  // namespace gatectl
