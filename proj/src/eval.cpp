// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/eval.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace gatectl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams of a training run.
enum Stream : std::uint64_t { kInitStream = 0, kDataStream = 1, kNoiseStream = 2, kDropStream = 3,
                              kLoraStream = 4, kEvalSetStream = 5, kEvalNoiseStream = 6 };

Tensor edge_plane(const Tensor& edges, const char* what) {
  if (edges.rank() == 2 && edges.shape()[0] == edges.shape()[1]) return edges;
  if (edges.rank() == 3 && edges.shape()[1] == edges.shape()[2]) {
    const std::size_t s = edges.shape()[1];
    Tensor plane({s, s});
    std::copy_n(edges.data().begin(), s * s, plane.data().begin());
    return plane;
  }
  throw DimensionError(std::string(what) + ": expected [S x S] or [C x S x S], got " +
                       shape_str(edges.shape()));
}

// Number of set pixels in `a` that have a set pixel of `b` within `tol`.
std::size_t count_hits(const Tensor& a, const Tensor& b, std::size_t tol) {
  const auto s = static_cast<std::ptrdiff_t>(a.shape()[0]);
  const auto r = static_cast<std::ptrdiff_t>(tol);
  std::size_t hits = 0;
  for (std::ptrdiff_t y = 0; y < s; ++y)
    for (std::ptrdiff_t x = 0; x < s; ++x) {
      if (a[static_cast<std::size_t>(y * s + x)] <= 0.5) continue;
      bool hit = false;
      for (std::ptrdiff_t yy = std::max<std::ptrdiff_t>(0, y - r);
           !hit && yy <= std::min(s - 1, y + r); ++yy)
        for (std::ptrdiff_t xx = std::max<std::ptrdiff_t>(0, x - r);
             !hit && xx <= std::min(s - 1, x + r); ++xx)
          hit = b[static_cast<std::size_t>(yy * s + xx)] > 0.5;
      hits += hit ? 1 : 0;
    }
  return hits;
}

std::size_t count_set(const Tensor& a) {
  std::size_t n = 0;
  for (double v : a.data()) n += v > 0.5 ? 1 : 0;
  return n;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <typename Fn>
void run_cells(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

double edge_f1_maps(const Tensor& generated_edges, const Tensor& reference_edges,
                    std::size_t tolerance) {
  const Tensor g = edge_plane(generated_edges, "edge_f1");
  const Tensor r = edge_plane(reference_edges, "edge_f1");
  if (!g.same_shape(r)) {
    throw DimensionError("edge_f1: " + shape_str(g.shape()) + " vs " + shape_str(r.shape()));
  }
  const std::size_t ng = count_set(g), nr = count_set(r);
  if (ng == 0 && nr == 0) return 1.0;
  const double precision = ng ? static_cast<double>(count_hits(g, r, tolerance)) / ng : 0.0;
  const double recall = nr ? static_cast<double>(count_hits(r, g, tolerance)) / nr : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double edge_f1(const Tensor& generated, const Tensor& condition_edge) {
  return edge_f1_maps(edge_condition(generated), condition_edge);
}

double mse(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("mse: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

double mse_metric(const Tensor& generated, const Tensor& reference_condition, TaskKind task) {
  if (!generated.same_shape(reference_condition)) {
    throw DimensionError("mse_metric: " + shape_str(generated.shape()) + " vs " +
                         shape_str(reference_condition.shape()));
  }
  return mse(apply_condition(task, generated), reference_condition);
}

double psnr(const Tensor& a, const Tensor& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

EvalMetrics evaluate(const ModelParams& params, const ModelConfig& cfg, TaskKind task,
                     const EvalOptions& options) {
  if (options.samples == 0) throw std::invalid_argument("evaluate: samples must be >= 1");
  const SceneConfig scenes{cfg.image_size, cfg.n_classes};
  Rng set_rng(derive_seed(options.seed, kEvalSetStream));
  const auto set = make_batch(task, options.samples, set_rng, scenes);
  EvalMetrics sum{};
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& s = set[i];
    const Tensor* cond = options.use_condition ? &s.condition : nullptr;
    Rng noise(derive_seed(derive_seed(options.seed, kEvalNoiseStream), i));
    const Tensor gen =
        euler_sample(model_velocity(params, cfg, cond, s.class_id), cfg.image_shape(), noise,
                     options.sampler);
    if (task == TaskKind::kEdge) sum.edge_f1 += edge_f1(gen, s.condition);
    if (spatially_aligned(task)) sum.mse += mse_metric(gen, s.condition, task);
    sum.psnr += psnr(gen, s.target);
  }
  const double n = static_cast<double>(set.size());
  EvalMetrics out;
  out.edge_f1 = task == TaskKind::kEdge ? sum.edge_f1 / n : kNaN;
  out.mse = spatially_aligned(task) ? sum.mse / n : kNaN;
  out.psnr = sum.psnr / n;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> RunRecord::losses() const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.loss_raw);
  return out;
}

double RunRecord::final_loss() const { return rows.empty() ? kNaN : rows.back().loss_smoothed; }

std::vector<double> smooth(const std::vector<double>& xs, double alpha) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i] = i == 0 ? xs[0] : (1.0 - alpha) * out[i - 1] + alpha * xs[i];
  }
  return out;
}

double loss_auc(const std::vector<double>& losses) {
  if (losses.empty()) return kNaN;
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

std::optional<std::size_t> steps_to_threshold(const std::vector<double>& smoothed, double tau) {
  for (std::size_t i = 0; i < smoothed.size(); ++i) {
    if (smoothed[i] < tau) return i + 1;
  }
  return std::nullopt;
}

ModelParams prepare_params(const RunSpec& spec, const ModelParams* base) {
  spec.model.validate();
  ModelParams params;
  if (spec.mode != TrainMode::kFinetune) {
    params = base ? clone_params(*base) : init_params(spec.model, derive_seed(spec.seed, kInitStream));
    ensure_gate_params(params, spec.model);
  } else {
    if (!base) throw std::invalid_argument("finetune run '" + spec.name + "' needs base parameters");
    params = clone_params(*base);
    add_lora(params, spec.model, derive_seed(spec.seed, kLoraStream));
    ensure_gate_params(params, spec.model);
  }
  set_trainable(params, spec.mode);
  return params;
}

RunRecord train_run(const RunSpec& spec, const ModelParams* base, ModelParams* trained,
                    const StepCallback& on_checkpoint) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.spec = spec;
  if (spec.batch_size == 0) throw std::invalid_argument("train_run: batch_size must be >= 1");
  ModelParams params = prepare_params(spec, base);
  Adam opt(spec.adam);
  const SceneConfig scenes{spec.model.image_size, spec.model.n_classes};
  Rng data_rng(derive_seed(spec.seed, kDataStream));
  Rng noise_rng(derive_seed(spec.seed, kNoiseStream));
  Rng drop_rng(derive_seed(spec.seed, kDropStream));
  const bool conditional = spec.mode != TrainMode::kPretrain;

  double smoothed = 0.0;
  rec.rows.reserve(spec.steps);
  for (std::size_t step = 1; step <= spec.steps; ++step) {
    const auto batch = make_batch(spec.task, spec.batch_size, data_rng, scenes);
    std::vector<TrainExample> examples(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto& ex = examples[i];
      if (conditional) ex.condition = batch[i].condition;
      ex.class_id = batch[i].class_id;
      ex.drop_condition = drop_rng.uniform() < spec.condition_dropout;
      ex.flow = make_flow_sample(batch[i].target, noise_rng);
    }
    double loss = 0.0;
    try {
      loss = train_step(params, spec.model, examples, opt);
    } catch (const NonFiniteError& e) {
      rec.diverged = true;
      rec.error = e.what();
      break;
    }
    smoothed = step == 1 ? loss : (1.0 - kSmoothingAlpha) * smoothed + kSmoothingAlpha * loss;
    MetricsRow row{step, smoothed, loss, std::nullopt};
    const bool checkpoint = spec.eval_interval > 0 && step % spec.eval_interval == 0;
    if (checkpoint) {
      row.metrics = evaluate(params, spec.model, spec.task, spec.eval);
      if (on_checkpoint) on_checkpoint(step, params);
    }
    rec.rows.push_back(row);
  }
  if (!rec.diverged) {
    if (!rec.rows.empty() && rec.rows.back().metrics) {
      rec.final_metrics = rec.rows.back().metrics;
    } else if (spec.eval.samples > 0 && spec.steps > 0) {
      rec.final_metrics = evaluate(params, spec.model, spec.task, spec.eval);
    }
    const bool already = spec.eval_interval > 0 && spec.steps > 0 && spec.steps % spec.eval_interval == 0;
    if (on_checkpoint && !already) on_checkpoint(rec.rows.size(), params);
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (trained) *trained = std::move(params);
  return rec;
}

// ---------------------------------------------------------------------------

ConvergenceReport convergence_compare(const RunSpec& base_spec, const std::vector<NamedSpec>& specs,
                                      const std::vector<std::uint64_t>& seeds,
                                      const ModelParams* base, std::size_t jobs) {
  if (specs.empty()) throw std::invalid_argument("convergence_compare: no specs");
  if (seeds.empty()) throw std::invalid_argument("convergence_compare: no seeds");
  ConvergenceReport rep;
  rep.seeds = seeds;
  rep.runs.assign(specs.size(), std::vector<RunRecord>(seeds.size()));
  for (const auto& s : specs) rep.specs.push_back(s.name);

  run_cells(specs.size() * seeds.size(), jobs, [&](std::size_t cell) {
    const std::size_t si = cell / seeds.size(), ki = cell % seeds.size();
    RunSpec spec = base_spec;
    spec.name = specs[si].name;
    spec.model.gate = specs[si].gate;
    spec.seed = seeds[ki];
    rep.runs[si][ki] = train_run(spec, base);
  });

  for (std::size_t k = 0; k < seeds.size(); ++k) {
    rep.tau.push_back(kThresholdFactor * rep.runs[0][k].final_loss());
  }
  rep.auc.assign(specs.size(), {});
  rep.steps.assign(specs.size(), {});
  rep.mean_loss.assign(specs.size(), {});
  for (std::size_t s = 0; s < specs.size(); ++s) {
    std::vector<double> total(base_spec.steps, 0.0);
    bool complete = true;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const RunRecord& r = rep.runs[s][k];
      const auto losses = r.losses();
      if (r.diverged) {
        rep.auc[s].push_back(std::numeric_limits<double>::infinity());
        rep.steps[s].push_back(std::nullopt);
        complete = false;
        continue;
      }
      rep.auc[s].push_back(loss_auc(losses));
      rep.steps[s].push_back(steps_to_threshold(smooth(losses), rep.tau[k]));
      for (std::size_t i = 0; i < losses.size(); ++i) total[i] += losses[i];
    }
    if (complete) {
      for (double& v : total) v /= static_cast<double>(seeds.size());
      rep.mean_loss[s] = std::move(total);
    }
  }
  return rep;
}

double OverheadReport::gate_ratio() const {
  return backbone ? static_cast<double>(gate) / static_cast<double>(backbone) : 0.0;
}

OverheadReport overhead_report(const ModelConfig& cfg) {
  ModelParams params = init_params(cfg, 0);
  add_lora(params, cfg, 0);
  ensure_gate_params(params, cfg);
  const ParamCounts c = param_counts(params);
  OverheadReport rep;
  rep.backbone = c.backbone;
  rep.lora = c.lora;
  rep.gate = c.gate;
  const double b = static_cast<double>(c.backbone);
  rep.rows = {{"backbone", c.backbone, 1.0},
              {"lora", c.lora, static_cast<double>(c.lora) / b},
              {"gate", c.gate, static_cast<double>(c.gate) / b}};
  return rep;
}

std::vector<NamedSpec> table3_variants(const GateSpec& ours) {
  std::vector<NamedSpec> out;
  GateSpec g = ours;
  g.enabled = false;
  out.push_back({"w/o gating", g});
  g = ours;
  g.interaction = false;
  out.push_back({"w/o interaction", g});
  g = ours;
  g.position = GatePosition::kAfterFfn;
  out.push_back({"After-FFN", g});
  g = ours;
  g.granularity = Granularity::kElementWise;
  out.push_back({"Elementwise", g});
  g = ours;
  g.score_source = ours.score_source == ScoreSource::kPreAttention ? ScoreSource::kPostAttention
                                                                   : ScoreSource::kPreAttention;
  out.push_back({"Input features", g});
  out.push_back({"Ours", ours});
  return out;
}

std::vector<NamedSpec> ablation_variants(const std::vector<std::string>& axes, const GateSpec& ours) {
  if (axes.empty()) throw std::invalid_argument("no ablation axes");
  if (axes.size() == 1 && axes[0] == "table3") return table3_variants(ours);
  std::vector<NamedSpec> cells{{"", ours}};
  for (const auto& axis : axes) {
    std::vector<NamedSpec> next;
    for (const auto& cell : cells) {
      auto add = [&](std::string value, auto&& set) {
        NamedSpec n = cell;
        set(n.gate);
        n.name += (n.name.empty() ? "" : ",") + axis + "=" + value;
        next.push_back(std::move(n));
      };
      if (axis == "gating") {
        for (bool on : {true, false}) add(on ? "on" : "off", [&](GateSpec& g) { g.enabled = on; });
      } else if (axis == "granularity") {
        for (auto v : {Granularity::kTokenWise, Granularity::kElementWise, Granularity::kDirectAdd})
          add(std::string(to_string(v)), [&](GateSpec& g) { g.granularity = v; });
      } else if (axis == "position") {
        for (auto v : {GatePosition::kAfterSelfAttention, GatePosition::kAfterCrossAttention,
                       GatePosition::kAfterFfn})
          add(std::string(to_string(v)), [&](GateSpec& g) { g.position = v; });
      } else if (axis == "score_source") {
        for (auto v : {ScoreSource::kPreAttention, ScoreSource::kPostAttention})
          add(std::string(to_string(v)), [&](GateSpec& g) { g.score_source = v; });
      } else if (axis == "interaction") {
        for (bool on : {true, false}) add(on ? "on" : "off", [&](GateSpec& g) { g.interaction = on; });
      } else {
        throw std::invalid_argument("unknown ablation axis '" + axis + "'");
      }
    }
    cells = std::move(next);
  }
  return cells;
}

std::vector<GridRow> ablation_grid(const RunSpec& base_spec, const std::vector<NamedSpec>& variants,
                                   const std::vector<std::uint64_t>& seeds,
                                   const ModelParams* base, std::size_t jobs,
                                   std::vector<RunRecord>* records) {
  if (variants.empty()) throw std::invalid_argument("ablation_grid: no variants");
  if (seeds.empty()) throw std::invalid_argument("ablation_grid: no seeds");
  std::vector<RunRecord> runs(variants.size() * seeds.size());
  std::vector<std::string> failures(runs.size());
  run_cells(runs.size(), jobs, [&](std::size_t cell) {
    const std::size_t vi = cell / seeds.size(), ki = cell % seeds.size();
    RunSpec spec = base_spec;
    spec.name = variants[vi].name;
    spec.model.gate = variants[vi].gate;
    spec.seed = seeds[ki];
    try {
      runs[cell] = train_run(spec, base);
    } catch (const std::exception& e) {
      failures[cell] = e.what();
    }
  });

  std::size_t ref = variants.size() - 1;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    if (variants[v].gate == base_spec.model.gate) ref = v;
  }
  std::vector<GridRow> rows;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const std::size_t cell = v * seeds.size() + k;
      const RunRecord& r = runs[cell];
      GridRow row;
      row.variant = variants[v].name;
      row.seed = seeds[k];
      row.diverged = r.diverged || !failures[cell].empty();
      row.error = failures[cell].empty() ? r.error : failures[cell];
      if (row.diverged) {
        row.final_loss = kNaN;
        row.metrics = {kNaN, kNaN, kNaN};
      } else {
        row.final_loss = r.final_loss();
        row.metrics = r.final_metrics.value_or(EvalMetrics{kNaN, kNaN, kNaN});
        const double tau = kThresholdFactor * runs[ref * seeds.size() + k].final_loss();
        row.steps_to_threshold = steps_to_threshold(smooth(r.losses()), tau);
      }
      rows.push_back(std::move(row));
    }
  }
  if (records) *records = std::move(runs);
  return rows;
}

}  // namespace gatectl
