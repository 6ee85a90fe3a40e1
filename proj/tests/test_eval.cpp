// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gatectl/eval.hpp"
#include "gatectl/io.hpp"
#include "support/grad_cases.hpp"

namespace gatectl {
namespace {

Tensor edge_map(std::size_t s, std::initializer_list<std::pair<std::size_t, std::size_t>> on) {
  Tensor t({s, s});
  for (auto [y, x] : on) t[y * s + x] = 1.0;
  return t;
}

// Eight-pixel canvas, two-block model: a few seconds for a handful of runs.
RunSpec small_spec() {
  RunSpec spec;
  spec.model = testing::tiny_config();
  spec.model.image_size = 8;
  spec.mode = TrainMode::kScratch;
  spec.steps = 12;
  spec.eval.samples = 2;
  spec.eval.sampler.steps = 2;
  return spec;
}

TEST(EdgeF1, SelfMatchAndEmpty) {
  Rng rng(1);
  const ToyScene scene = gen_scene(0, rng);
  EXPECT_EQ(edge_f1(scene.canvas, edge_condition(scene.canvas)), 1.0);
  EXPECT_EQ(edge_f1(Tensor({3, 32, 32}, 0.4), edge_condition(scene.canvas)), 0.0);
  EXPECT_EQ(edge_f1_maps(Tensor({4, 4}), Tensor({4, 4})), 1.0);
}

TEST(EdgeF1, HandCountedCase) {
  // Generated (0,0), (0,1), (3,3); reference (0,0), (0,1), (3,0). The two
  // strays are three pixels from anything on the other map.
  const Tensor gen = edge_map(4, {{0, 0}, {0, 1}, {3, 3}});
  const Tensor ref = edge_map(4, {{0, 0}, {0, 1}, {3, 0}});
  EXPECT_NEAR(edge_f1_maps(gen, ref), 2.0 / 3.0, 1e-15);
}

TEST(EdgeF1, OnePixelToleranceAndStrictMode) {
  const Tensor gen = edge_map(6, {{2, 2}, {2, 3}});
  const Tensor ref = edge_map(6, {{3, 2}, {3, 3}});
  EXPECT_EQ(edge_f1_maps(gen, ref, 1), 1.0);
  EXPECT_EQ(edge_f1_maps(gen, ref, 0), 0.0);
}

TEST(EdgeF1, BoundedOnRandomMaps) {
  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    Tensor a({8, 8}), b({8, 8});
    for (auto& v : a.data()) v = rng.uniform() < 0.2 ? 1.0 : 0.0;
    for (auto& v : b.data()) v = rng.uniform() < 0.2 ? 1.0 : 0.0;
    const double f = edge_f1_maps(a, b);
    ASSERT_GE(f, 0.0);
    ASSERT_LE(f, 1.0);
    ASSERT_EQ(edge_f1_maps(a, a), 1.0);
  }
}

TEST(MseMetric, Examples) {
  Rng rng(3);
  const Tensor target = gen_scene(2, rng).canvas;
  EXPECT_EQ(mse_metric(target, gray_condition(target), TaskKind::kColorize), 0.0);
  EXPECT_EQ(mse_metric(target, blur_condition(target), TaskKind::kDeblur), 0.0);
  Tensor shifted = target;
  for (auto& v : shifted.data()) v += 1.0;
  EXPECT_NEAR(mse_metric(shifted, gray_condition(target), TaskKind::kColorize), 1.0, 1e-12);
  EXPECT_THROW(mse_metric(target, Tensor({3, 8, 8}), TaskKind::kColorize), DimensionError);

  const Tensor a = rng.uniform_tensor({2, 3}, 0, 1), b = rng.uniform_tensor({2, 3}, 0, 1);
  double sq = 0.0;
  for (std::size_t i = 0; i < 6; ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(mse(a, b), sq / 6.0, 1e-15);
}

TEST(Psnr, Examples) {
  Rng rng(4);
  const Tensor a = rng.uniform_tensor({3, 4, 4}, 0, 1);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_NEAR(psnr(Tensor({10}, 0.0), Tensor({10}, 0.1)), 20.0, 1e-9);
  const Tensor b = rng.uniform_tensor({3, 4, 4}, 0, 1);
  EXPECT_NEAR(psnr(a, b), -10.0 * std::log10(mse(a, b)), 1e-12);
}

TEST(Curves, SmoothAucThreshold) {
  const std::vector<double> xs{1.0, 0.0, 0.0};
  const auto s = smooth(xs, 0.5);
  EXPECT_EQ(s, (std::vector<double>{1.0, 0.5, 0.25}));
  EXPECT_EQ(smooth({}), std::vector<double>{});
  EXPECT_NEAR(loss_auc({1.0, 2.0, 3.0}), 2.0, 1e-15);
  EXPECT_TRUE(std::isnan(loss_auc({})));
  EXPECT_EQ(steps_to_threshold(s, 0.6), 2u);
  EXPECT_EQ(steps_to_threshold(s, 0.25), std::nullopt);
  EXPECT_EQ(steps_to_threshold(s, 2.0), 1u);
}

TEST(Overhead, GateArithmetic) {
  const ModelConfig cfg;
  const OverheadReport rep = overhead_report(cfg);
  EXPECT_EQ(rep.gate, 512u);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.rows[2].name, "gate");
  EXPECT_NEAR(rep.rows[1].ratio, static_cast<double>(rep.lora) / static_cast<double>(rep.backbone), 1e-15);
  ModelConfig element = cfg;
  element.gate.granularity = Granularity::kElementWise;
  EXPECT_EQ(overhead_report(element).gate, 64u * rep.gate);
  ModelConfig off = cfg;
  off.gate.enabled = false;
  EXPECT_EQ(overhead_report(off).gate, 0u);
  EXPECT_EQ(overhead_report(off).backbone, rep.backbone);
}

TEST(Variants, Table3AndAxes) {
  const auto t3 = table3_variants();
  ASSERT_EQ(t3.size(), 6u);
  const std::vector<std::string> names{"w/o gating", "w/o interaction", "After-FFN", "Elementwise",
                                       "Input features", "Ours"};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(t3[i].name, names[i]);
  EXPECT_EQ(t3.back().gate, GateSpec{});
  EXPECT_FALSE(t3[0].gate.enabled);
  EXPECT_EQ(t3[4].gate.score_source, ScoreSource::kPostAttention);

  EXPECT_EQ(ablation_variants({"granularity"}).size(), 3u);
  EXPECT_EQ(ablation_variants({"granularity", "position"}).size(), 9u);
  EXPECT_EQ(ablation_variants({"table3"}).size(), 6u);
  EXPECT_THROW(ablation_variants({}), std::invalid_argument);
  EXPECT_THROW(ablation_variants({"depth"}), std::invalid_argument);
}

TEST(TrainRun, RecordShapeAndDeterminism) {
  RunSpec spec = small_spec();
  spec.eval_interval = 5;
  std::vector<std::size_t> checkpoints;
  const RunRecord a = train_run(spec, nullptr, nullptr, [&](std::size_t step, const ModelParams&) {
    checkpoints.push_back(step);
  });
  ASSERT_FALSE(a.diverged);
  ASSERT_EQ(a.rows.size(), spec.steps);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].step, i + 1);
    EXPECT_EQ(a.rows[i].metrics.has_value(), (i + 1) % 5 == 0);
  }
  EXPECT_EQ(checkpoints, (std::vector<std::size_t>{5, 10, 12}));
  EXPECT_TRUE(a.final_metrics.has_value());
  EXPECT_EQ(a.final_loss(), a.rows.back().loss_smoothed);

  const RunRecord b = train_run(spec);
  EXPECT_EQ(a.losses(), b.losses());
  EXPECT_EQ(convergence_csv(a.rows), convergence_csv(b.rows));
}

TEST(TrainRun, FinetuneNeedsBase) {
  RunSpec spec = small_spec();
  spec.mode = TrainMode::kFinetune;
  EXPECT_THROW(train_run(spec), std::invalid_argument);
}

TEST(TrainRun, EvaluateReportsTaskMetrics) {
  const RunSpec spec = small_spec();
  ModelParams params = prepare_params(spec, nullptr);
  const EvalMetrics edge = evaluate(params, spec.model, TaskKind::kEdge, spec.eval);
  EXPECT_GE(edge.edge_f1, 0.0);
  EXPECT_LE(edge.edge_f1, 1.0);
  EXPECT_TRUE(std::isfinite(edge.mse));
  const EvalMetrics color = evaluate(params, spec.model, TaskKind::kColorize, spec.eval);
  EXPECT_TRUE(std::isnan(color.edge_f1));
  const EvalMetrics subject = evaluate(params, spec.model, TaskKind::kSubject, spec.eval);
  EXPECT_TRUE(std::isnan(subject.mse));
  EXPECT_TRUE(std::isfinite(subject.psnr));
}

TEST(Convergence, IdenticalSpecsGiveIdenticalCurves) {
  const RunSpec spec = small_spec();
  const ConvergenceReport rep = convergence_compare(spec, {{"a", GateSpec{}}, {"b", GateSpec{}}}, {1, 2});
  ASSERT_EQ(rep.runs.size(), 2u);
  EXPECT_EQ(rep.mean_loss[0], rep.mean_loss[1]);
  EXPECT_EQ(rep.auc[0], rep.auc[1]);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(rep.tau[k], kThresholdFactor * rep.runs[0][k].final_loss());
    EXPECT_EQ(rep.steps[0][k], rep.steps[1][k]);
  }
}

TEST(Convergence, SingleSpecSingleCurve) {
  const ConvergenceReport rep = convergence_compare(small_spec(), {{"only", GateSpec{}}}, {3});
  ASSERT_EQ(rep.specs.size(), 1u);
  EXPECT_EQ(rep.mean_loss[0].size(), 12u);
  EXPECT_EQ(rep.mean_loss[0], rep.runs[0][0].losses());
  EXPECT_THROW(convergence_compare(small_spec(), {}, {1}), std::invalid_argument);
}

TEST(Convergence, SameBatchesAcrossSpecs) {
  // The zero-initialized unembedding predicts zero velocity under every spec,
  // so equal first losses mean equal batches and noise.
  RunSpec spec = small_spec();
  spec.steps = 1;
  GateSpec add;
  add.granularity = Granularity::kDirectAdd;
  const ConvergenceReport rep = convergence_compare(spec, {{"ours", GateSpec{}}, {"add", add}}, {4});
  EXPECT_EQ(rep.runs[0][0].losses(), rep.runs[1][0].losses());
}

TEST(Grid, Table3RowsAndCrossCheck) {
  RunSpec spec = small_spec();
  spec.steps = 6;
  std::vector<RunRecord> records;
  const auto rows = ablation_grid(spec, table3_variants(), {1, 2}, nullptr, 2, &records);
  ASSERT_EQ(rows.size(), 12u);
  ASSERT_EQ(records.size(), 12u);
  EXPECT_EQ(rows[0].variant, "w/o gating");
  EXPECT_EQ(rows[11].variant, "Ours");
  for (const auto& r : rows) {
    EXPECT_FALSE(r.diverged) << r.variant << ": " << r.error;
    EXPECT_TRUE(std::isfinite(r.final_loss));
  }
  // The "w/o gating" cell is the same run convergence_compare makes.
  const ConvergenceReport rep =
      convergence_compare(spec, {{"Ours", GateSpec{}}, {"w/o gating", table3_variants()[0].gate}}, {1, 2});
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(rows[k].final_loss, rep.runs[1][k].final_loss());
    EXPECT_EQ(rows[k].steps_to_threshold, rep.steps[1][k]);
  }

  const std::string csv = grid_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,seed,final_loss,edge_f1,mse,psnr,steps_to_threshold");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
  // Serial and parallel execution produce the same table.
  EXPECT_EQ(grid_csv(ablation_grid(spec, table3_variants(), {1, 2}, nullptr, 1)), csv);
}

TEST(Grid, FailedCellsAreMarkedRows) {
  RunSpec spec = small_spec();
  spec.steps = 2;
  spec.mode = TrainMode::kFinetune;  // no base: every cell fails
  const auto rows = ablation_grid(spec, {{"x", GateSpec{}}}, {1});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].diverged);
  EXPECT_NE(rows[0].error.find("base"), std::string::npos);
}

}  // namespace
}  // namespace gatectl
