// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

// gatectl: train, sample, ablate, bench and report.
//
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gatectl/commands.hpp"
#include "gatectl/config.hpp"
#include "gatectl/io.hpp"

namespace fs = std::filesystem;
using namespace gatectl;

namespace {

// Config-file path plus one string option per config key; values are parsed
// by the config layer so that file and flag errors read the same.
struct ConfigFlags {
  std::string config_path;
  CLI::Option* config_opt = nullptr;
  std::vector<std::pair<std::string, CLI::Option*>> keys;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    config_opt = app->add_option("--config", config_path, "key = value config file");
    for (const auto& key : config_keys()) {
      keys.emplace_back(key.name, app->add_option(flag_name(key.name), values[key.name], key.help));
    }
  }

  bool has_config() const { return config_opt->count() > 0; }

  // File first, then flags on top. Every problem is reported at once.
  RunConfig resolve(const std::optional<fs::path>& fallback_config = std::nullopt) const {
    RunConfig cfg;
    if (has_config()) {
      cfg = load_config(config_path);
    } else if (fallback_config && fs::exists(*fallback_config)) {
      cfg = load_config(*fallback_config);
    }
    std::vector<std::string> errors;
    for (const auto& [name, opt] : keys) {
      if (opt->count() == 0) continue;
      try {
        set_config_value(cfg, name, values.at(name));
      } catch (const std::invalid_argument& e) {
        errors.push_back(std::string("command line: ") + e.what());
      }
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    cfg.validate();
    return cfg;
  }
};

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (pos != item.size() || item.empty() || item[0] == '-') {
      throw UsageError("--sizes: expected comma-separated positive integers, got '" + text + "'");
    }
    sizes.push_back(static_cast<std::size_t>(v));
  }
  return sizes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated linear-attention diffusion transformer toolkit"};
  app.require_subcommand(1);

  CLI::App* train = app.add_subcommand("train", "Pretrain, fine-tune or train from scratch");
  ConfigFlags train_flags;
  train_flags.attach(train);

  CLI::App* sample = app.add_subcommand("sample", "Write condition/generated image pairs");
  ConfigFlags sample_flags;
  sample_flags.attach(sample);
  SampleRequest sample_req;
  std::string sample_checkpoint;
  sample->add_option("--checkpoint", sample_checkpoint, "checkpoint to sample from")->required();
  sample->add_option("--n", sample_req.n, "number of samples");

  CLI::App* ablate = app.add_subcommand("ablate", "Train every variant of the ablation grid");
  ConfigFlags ablate_flags;
  ablate_flags.attach(ablate);
  std::size_t jobs = 1;
  ablate->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);

  CLI::App* bench = app.add_subcommand("bench", "Time softmax against linear attention");
  std::string sizes_text = "256,1024";
  std::uint64_t bench_seed = 0;
  std::string bench_output;
  bench->add_option("--sizes", sizes_text, "comma-separated sequence lengths");
  bench->add_option("--seed", bench_seed, "input seed");
  bench->add_option("--output", bench_output, "directory for bench.csv (default: stdout only)");

  CLI::App* report = app.add_subcommand("report", "Compare the metrics of finished runs");
  std::vector<std::string> report_dirs;
  std::string report_output;
  report->add_option("dirs", report_dirs, "run directories; the first is the reference")->required();
  report->add_option("--output", report_output, "directory for report.csv (default: stdout only)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) {
      cmd_train(train_flags.resolve(), std::cerr);
    } else if (*sample) {
      sample_req.checkpoint = sample_checkpoint;
      // Without --config the run's own config.txt describes the checkpoint.
      const RunConfig cfg =
          sample_flags.resolve(sample_req.checkpoint.parent_path() / kConfigFile);
      cmd_sample(cfg, sample_req, std::cerr);
    } else if (*ablate) {
      cmd_ablate(ablate_flags.resolve(), jobs, std::cerr);
    } else if (*bench) {
      const auto rows = cmd_bench(parse_sizes(sizes_text), bench_seed);
      const std::string csv = bench_csv(rows);
      if (!bench_output.empty()) {
        fs::create_directories(bench_output);
        write_text_atomic(fs::path(bench_output) / "bench.csv", csv);
      }
      std::cout << csv;
    } else if (*report) {
      const std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
      const auto rows = build_report(dirs);
      const std::string csv = report_csv(rows);
      if (!report_output.empty()) {
        fs::create_directories(report_output);
        write_text_atomic(fs::path(report_output) / "report.csv", csv);
      }
      std::cout << csv;
      std::cerr << report_summary(rows);
    }
  } catch (const ConfigError& e) {
    for (const auto& msg : e.errors()) std::cerr << "error: " << msg << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
