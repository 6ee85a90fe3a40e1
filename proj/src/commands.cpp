// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/commands.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <limits>

#include "gatectl/io.hpp"
#include "gatectl/kernels.hpp"

namespace gatectl {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSampleNoiseStream = 0x5a;

std::optional<ModelParams> load_base(const RunConfig& cfg) {
  if (cfg.mode != TrainMode::kFinetune) return std::nullopt;
  try {
    return load_checkpoint(cfg.base_checkpoint);
  } catch (const CheckpointError& e) {
    throw RuntimeFailure(std::string("base checkpoint: ") + e.what());
  }
}

// Every tensor the forward pass needs must be present with the right shape.
void check_compatible(const ModelParams& params, const ModelConfig& cfg, const std::string& origin) {
  ModelParams expected = init_params(cfg, 0);
  ensure_gate_params(expected, cfg);
  for (const auto& [name, v] : expected) {
    auto it = params.find(name);
    if (it == params.end()) {
      throw RuntimeFailure(origin + ": missing tensor '" + name + "' for this model config");
    }
    if (it->second.shape() != v.shape()) {
      throw RuntimeFailure(origin + ": tensor '" + name + "' has shape " +
                           shape_str(it->second.shape()) + ", config expects " + shape_str(v.shape()));
    }
  }
}

}  // namespace

std::string file_slug(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
      out += c;
    } else if (c == '/') {
      out += '-';
    } else {
      out += '_';
    }
  }
  return out.empty() ? "_" : out;
}

RunRecord cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const std::optional<ModelParams> base = load_base(cfg);
  if (base) check_compatible(*base, cfg.model, "base checkpoint " + cfg.base_checkpoint);
  const fs::path out = cfg.output;
  fs::create_directories(out);
  write_text_atomic(out / kConfigFile, format_config(cfg));

  const RunSpec spec = cfg.run_spec();
  std::size_t last_saved = 0;
  bool saved = false;
  const RunRecord rec = train_run(spec, base ? &*base : nullptr, nullptr,
                                  [&](std::size_t step, const ModelParams& params) {
                                    save_checkpoint(out / kCheckpointFile, params);
                                    last_saved = step;
                                    saved = true;
                                    log << "step " << step << ": checkpoint written\n";
                                  });
  write_text_atomic(out / kMetricsFile, convergence_csv(rec.rows));
  if (rec.diverged) {
    std::string msg = rec.error;
    msg += saved ? "; last checkpoint (step " + std::to_string(last_saved) + ") retained"
                 : "; no checkpoint was written";
    throw RuntimeFailure(msg);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "trained %zu steps in %.1f s, final smoothed loss %s\n",
                rec.rows.size(), rec.wall_seconds, format_double(rec.final_loss()).c_str());
  log << buf;
  return rec;
}

std::vector<fs::path> cmd_sample(const RunConfig& cfg, const SampleRequest& req, std::ostream& log) {
  cfg.validate();
  if (req.n == 0) throw UsageError("sample: n must be >= 1");
  ModelParams params;
  try {
    params = load_checkpoint(req.checkpoint);
  } catch (const CheckpointError& e) {
    throw RuntimeFailure(e.what());
  }
  check_compatible(params, cfg.model, req.checkpoint.string());

  const fs::path out = cfg.output;
  fs::create_directories(out);
  SampleOptions options;
  options.steps = cfg.sample_steps;
  options.guidance_scale = cfg.guidance_scale;
  const SceneConfig scenes{cfg.model.image_size, cfg.model.n_classes};
  const bool conditional = cfg.mode != TrainMode::kPretrain;

  std::vector<fs::path> written;
  for (std::size_t i = 0; i < req.n; ++i) {
    const TaskSample s = make_sample(cfg.task, derive_seed(cfg.seed, i), scenes);
    Rng noise(derive_seed(derive_seed(cfg.seed, kSampleNoiseStream), i));
    const Tensor gen = euler_sample(
        model_velocity(params, cfg.model, conditional ? &s.condition : nullptr, s.class_id),
        cfg.model.image_shape(), noise, options);
    const std::string stem = "sample_" + std::to_string(i);
    written.push_back(out / (stem + "_condition.ppm"));
    write_ppm(written.back(), s.condition);
    written.push_back(out / (stem + "_generated.ppm"));
    write_ppm(written.back(), gen);
  }
  log << "wrote " << written.size() << " images to " << out.string() << "\n";
  return written;
}

std::vector<GridRow> cmd_ablate(const RunConfig& cfg, std::size_t jobs, std::ostream& log) {
  cfg.validate();
  if (cfg.axes.empty()) throw UsageError("no ablation axes");
  if (cfg.mode == TrainMode::kPretrain) {
    throw UsageError("ablate: gating only acts in conditional modes (finetune or scratch)");
  }
  if (cfg.seeds.empty()) throw UsageError("ablate: no seeds");
  std::vector<NamedSpec> variants;
  try {
    variants = ablation_variants(cfg.axes, cfg.model.gate);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const std::optional<ModelParams> base = load_base(cfg);
  if (base) check_compatible(*base, cfg.model, "base checkpoint " + cfg.base_checkpoint);
  const fs::path out = cfg.output;
  fs::create_directories(out / "cells");
  write_text_atomic(out / kConfigFile, format_config(cfg));

  log << "ablate: " << variants.size() << " variants x " << cfg.seeds.size() << " seeds\n";
  std::vector<RunRecord> records;
  const auto rows = ablation_grid(cfg.run_spec(), variants, cfg.seeds, base ? &*base : nullptr,
                                  std::max<std::size_t>(1, jobs), &records);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string name = file_slug(rows[i].variant) + "_seed" + std::to_string(rows[i].seed);
    write_text_atomic(out / "cells" / (name + ".csv"), convergence_csv(records[i].rows));
    if (rows[i].diverged) log << "  " << rows[i].variant << " seed " << rows[i].seed
                              << " failed: " << rows[i].error << "\n";
  }
  write_text_atomic(out / "grid.csv", grid_csv(rows));
  log << "wrote " << (out / "grid.csv").string() << "\n";
  return rows;
}

std::vector<BenchRow> cmd_bench(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  if (sizes.empty()) throw UsageError("bench: no sizes");
  std::vector<BenchRow> rows;
  for (std::size_t n : sizes) {
    if (n == 0) throw UsageError("bench: sizes must be positive");
    Rng rng(derive_seed(seed, n));
    const std::size_t d = kBenchWidth;
    const Tensor q = rng.normal_tensor({n, d}), k = rng.normal_tensor({n, d}),
                 v = rng.normal_tensor({n, d});
    Tensor o({n, d});
    const kernels::ConstMatRef qm{q.data(), n, d}, km{k.data(), n, d}, vm{v.data(), n, d};
    const kernels::MatRef om{o.data(), n, d};

    // Best of several repetitions, each at least ~20 ms of work.
    auto time_ms = [](auto&& fn) {
      using clock = std::chrono::steady_clock;
      double best = 1e300;
      for (int rep = 0; rep < 5; ++rep) {
        std::size_t iters = 0;
        const auto start = clock::now();
        double elapsed = 0.0;
        do {
          fn();
          ++iters;
          elapsed = std::chrono::duration<double, std::milli>(clock::now() - start).count();
        } while (elapsed < 20.0);
        best = std::min(best, elapsed / static_cast<double>(iters));
      }
      return best;
    };
    BenchRow row;
    row.n = n;
    row.softmax_ms = time_ms([&] { kernels::parallel::softmax_attention(qm, km, vm, om); });
    row.linear_ms = time_ms([&] {
      kernels::parallel::linear_attention(qm, km, vm, true, kLinearAttentionEps, om);
    });
    rows.push_back(row);
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "n,softmax_ms,linear_ms,ratio\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n) + "," + format_double(r.softmax_ms) + "," +
           format_double(r.linear_ms) + "," + format_double(r.softmax_ms / r.linear_ms) + "\n";
  }
  return out;
}

std::vector<ReportRow> build_report(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw UsageError("report: no run directories");
  for (const auto& dir : run_dirs) {
    if (!fs::is_directory(dir)) throw UsageError("report: no such run directory " + dir.string());
  }
  std::vector<ReportRow> rows;
  std::vector<std::vector<double>> smoothed;
  for (const auto& dir : run_dirs) {
    const auto metrics = read_convergence_csv(dir / kMetricsFile);
    ReportRow r;
    r.run = dir.string();
    r.steps = metrics.size();
    std::vector<double> raw, sm;
    for (const auto& m : metrics) {
      raw.push_back(m.loss_raw);
      sm.push_back(m.loss_smoothed);
    }
    r.final_loss = sm.empty() ? std::numeric_limits<double>::quiet_NaN() : sm.back();
    r.auc = loss_auc(raw);
    rows.push_back(r);
    smoothed.push_back(std::move(sm));
  }
  const double tau = kThresholdFactor * rows.front().final_loss;
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].steps_to_threshold = steps_to_threshold(smoothed[i], tau);
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) {
    out += r.run + "," + std::to_string(r.steps) + "," + format_double(r.final_loss) + "," +
           format_double(r.auc) + "," +
           (r.steps_to_threshold ? std::to_string(*r.steps_to_threshold) : "inf") + "\n";
  }
  return out;
}

std::string report_summary(const std::vector<ReportRow>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "reference %s: tau = %s\n", rows.front().run.c_str(),
                format_double(kThresholdFactor * rows.front().final_loss).c_str());
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-32s auc %.5f  final %.5f  steps-to-threshold %s\n",
                  r.run.c_str(), r.auc, r.final_loss,
                  r.steps_to_threshold ? std::to_string(*r.steps_to_threshold).c_str() : "inf");
    out += buf;
  }
  return out;
}

}  // namespace gatectl
