// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Run configuration: a `key = value` file with `#` comments, overridable from
// the command line as `--kebab-case` flags.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gatectl/data.hpp"
#include "gatectl/eval.hpp"
#include "gatectl/model.hpp"

namespace gatectl {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

std::string_view to_string(TrainMode mode);

struct RunConfig {
  ModelConfig model;
  TaskKind task = TaskKind::kEdge;
  TrainMode mode = TrainMode::kPretrain;
  std::size_t steps = 2000;
  std::size_t batch_size = 2;
  std::uint64_t seed = 0;
  std::string output = "runs/default";
  std::size_t eval_interval = 500;
  std::size_t eval_samples = 8;
  std::size_t sample_steps = 20;
  double guidance_scale = 1.0;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double condition_dropout = 0.1;
  std::string base_checkpoint;  // required by finetune runs
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> axes{"table3"};

  RunSpec run_spec() const;
  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

struct ConfigKey {
  std::string name;  // snake_case; the flag is --name with '_' -> '-'
  std::string help;
};

const std::vector<ConfigKey>& config_keys();
std::string flag_name(std::string_view key);

/// Sets one key. Throws std::invalid_argument with a message on bad values
/// and unknown keys.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& cfg, std::string_view key);

/// Applies every line of `text` on top of `cfg`. All problems are collected
/// and reported together as "origin:line: message".
void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin);
RunConfig parse_config_text(std::string_view text, const std::string& origin);
RunConfig load_config(const std::filesystem::path& path);
/// Every key in table order; parses back to an equal configuration.
std::string format_config(const RunConfig& cfg);

}  // namespace gatectl
