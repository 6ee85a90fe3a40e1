// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// The subcommands of the gatectl binary, callable from tests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gatectl/config.hpp"
#include "gatectl/eval.hpp"

namespace gatectl {

/// Bad invocation; maps to exit code 1 like ConfigError.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure after work started; maps to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr const char* kCheckpointFile = "checkpoint.gtck";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kConfigFile = "config.txt";

/// Writes config.txt, metrics.csv and checkpoint.gtck (every eval_interval
/// steps and at the end) under cfg.output. A non-finite loss keeps the last
/// checkpoint and the metrics so far, then throws RuntimeFailure.
RunRecord cmd_train(const RunConfig& cfg, std::ostream& log);

struct SampleRequest {
  std::filesystem::path checkpoint;
  std::size_t n = 4;
};

/// Writes sample_<i>_condition.ppm and sample_<i>_generated.ppm for i < n
/// under cfg.output, using cfg.task, sample_steps, guidance_scale and seed.
std::vector<std::filesystem::path> cmd_sample(const RunConfig& cfg, const SampleRequest& req,
                                              std::ostream& log);

/// Writes grid.csv and one metrics file per cell under cfg.output/cells.
std::vector<GridRow> cmd_ablate(const RunConfig& cfg, std::size_t jobs, std::ostream& log);

struct BenchRow {
  std::size_t n = 0;
  double softmax_ms = 0.0;
  double linear_ms = 0.0;
};

inline constexpr std::size_t kBenchWidth = 64;

/// Times softmax and normalized linear attention on random [n x 64] inputs.
std::vector<BenchRow> cmd_bench(const std::vector<std::size_t>& sizes, std::uint64_t seed);
/// `n,softmax_ms,linear_ms,ratio` with ratio = softmax_ms / linear_ms.
std::string bench_csv(const std::vector<BenchRow>& rows);

struct ReportRow {
  std::string run;
  std::size_t steps = 0;
  double final_loss = 0.0;  // last smoothed loss
  double auc = 0.0;         // mean raw loss
  std::optional<std::size_t> steps_to_threshold;
};

inline constexpr const char* kReportHeader = "run,steps,final_loss,auc,steps_to_threshold";

/// Reads <dir>/metrics.csv from each run directory. tau is 1.05 x the first
/// run's final smoothed loss.
std::vector<ReportRow> build_report(const std::vector<std::filesystem::path>& run_dirs);
std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_summary(const std::vector<ReportRow>& rows);

/// Replaces characters that are awkward in file names.
std::string file_slug(const std::string& name);

}  // namespace gatectl
