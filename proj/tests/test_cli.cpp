// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gatectl/commands.hpp"
#include "gatectl/config.hpp"
#include "gatectl/io.hpp"
#include "support/grad_cases.hpp"

namespace gatectl {
namespace {

namespace fs = std::filesystem;

// Fresh scratch directory per test, removed afterwards.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           ("gatectl_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

RunConfig tiny_run(const fs::path& out) {
  RunConfig cfg;
  cfg.model = testing::tiny_config();
  cfg.model.image_size = 8;
  cfg.steps = 6;
  cfg.eval_interval = 3;
  cfg.eval_samples = 1;
  cfg.sample_steps = 2;
  cfg.output = out.string();
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GATECTL_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Config, ParsesCommentsAndOverrides) {
  const RunConfig cfg = parse_config_text(
      "# desk run\n\nsteps = 40   # short\n task=colorize\nd_model = 32\ngranularity = element_wise\n", "a.txt");
  EXPECT_EQ(cfg.steps, 40u);
  EXPECT_EQ(cfg.task, TaskKind::kColorize);
  EXPECT_EQ(cfg.model.d_model, 32u);
  EXPECT_EQ(cfg.model.gate.granularity, Granularity::kElementWise);
  EXPECT_EQ(cfg.batch_size, RunConfig{}.batch_size);
}

TEST(Config, ErrorsListEveryBadLine) {
  try {
    parse_config_text("steps = 3\nbogus = 1\nlr = fast\nnot a pair\nsteps = 4\n", "run.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    ASSERT_EQ(e.errors().size(), 4u);
    EXPECT_NE(e.errors()[0].find("run.cfg:2:"), std::string::npos) << e.errors()[0];
    EXPECT_NE(e.errors()[0].find("bogus"), std::string::npos);
    EXPECT_NE(e.errors()[1].find("run.cfg:3:"), std::string::npos);
    EXPECT_NE(e.errors()[2].find("run.cfg:4:"), std::string::npos);
    EXPECT_NE(e.errors()[3].find("duplicate"), std::string::npos);
  }
}

TEST(Config, FormatRoundTripsAndFlagsAreKebabCase) {
  RunConfig cfg;
  cfg.lr = 3.5e-4;
  cfg.seeds = {4, 9};
  cfg.axes = {"granularity", "position"};
  cfg.model.gate.interaction = false;
  const std::string text = format_config(cfg);
  EXPECT_EQ(format_config(parse_config_text(text, "x")), text);
  EXPECT_EQ(flag_name("batch_size"), "--batch-size");
  for (const auto& k : config_keys()) {
    EXPECT_EQ(k.name.find('-'), std::string::npos);
    EXPECT_NO_THROW(get_config_value(cfg, k.name));
  }
}

TEST(Config, ValidateRejectsFinetuneWithoutBase) {
  RunConfig cfg;
  cfg.mode = TrainMode::kFinetune;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Checkpoint, LayoutAndCrc) {
  const std::string check = "123456789";
  EXPECT_EQ(crc32({reinterpret_cast<const std::uint8_t*>(check.data()), check.size()}), 0xCBF43926u);

  ModelParams params;
  params.emplace("w", Var(Tensor::from_rows({{1.0, -2.0}})));
  const Bytes b = encode_checkpoint(params);
  // magic, version, count, name len, "w", rank, 2 dims, 2 floats, crc
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 4 + 1 + 4 + 8 + 8 + 4);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "GTCK");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[8], 1);
  float first;
  std::memcpy(&first, b.data() + 29, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const ModelConfig cfg = testing::tiny_config();
  ModelParams params = init_params(cfg, 1);
  testing::randomize(params, 2);
  add_lora(params, cfg, 3);
  const Bytes first = encode_checkpoint(params);
  const ModelParams loaded = decode_checkpoint(first, "mem");
  EXPECT_EQ(encode_checkpoint(loaded), first);
  ASSERT_EQ(loaded.size(), params.size());
  for (const auto& [name, v] : params) {
    const Tensor& got = loaded.at(name).value();
    ASSERT_EQ(got.shape(), v.shape()) << name;
    for (std::size_t i = 0; i < got.size(); ++i)
      ASSERT_EQ(got[i], static_cast<double>(static_cast<float>(v.value()[i]))) << name;
    EXPECT_FALSE(loaded.at(name).requires_grad());
  }
}

TEST_F(CliTest, CorruptCheckpointsAreRejected) {
  ModelParams params = init_params(testing::tiny_config(), 4);
  Bytes b = encode_checkpoint(params);
  Bytes flipped = b;
  flipped[40] ^= 0x10;
  try {
    decode_checkpoint(flipped, "c.gtck");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("CRC mismatch"), std::string::npos) << e.what();
  }
  EXPECT_THROW(decode_checkpoint(Bytes(b.begin(), b.begin() + 10), "t"), CheckpointError);
  Bytes magic = b;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic, "m"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir_ / "absent.gtck"), CheckpointError);

  const fs::path path = dir_ / "bad.gtck";
  write_file_atomic(path, flipped);
  RunConfig cfg = tiny_run(dir_ / "out");
  std::ostringstream log;
  try {
    cmd_sample(cfg, {path, 1}, log);
    FAIL();
  } catch (const RuntimeFailure& e) {
    EXPECT_NE(std::string(e.what()).find("CRC"), std::string::npos);
  }
}

TEST(Ppm, EncodeDecode) {
  Tensor img({3, 2, 2});
  img[0] = 1.0;
  img[5] = 0.5;
  img[11] = 2.0;   // clamped
  img[1] = -1.0;   // clamped
  const Bytes b = encode_ppm(img);
  const std::string header = "P6\n2 2\n255\n";
  ASSERT_EQ(b.size(), header.size() + 12);
  EXPECT_EQ(std::string(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(header.size())), header);
  // Interleaved RGB: pixel 0 is (img[0], img[4], img[8]).
  EXPECT_EQ(b[header.size()], 255);
  EXPECT_EQ(b[header.size() + 3], 0);
  const Tensor back = decode_ppm(b);
  EXPECT_EQ(back.shape(), img.shape());
  EXPECT_EQ(back[0], 1.0);
  EXPECT_NEAR(back[5], 0.5, 0.5 / 255.0);
  EXPECT_EQ(back[11], 1.0);
  EXPECT_EQ(back[1], 0.0);
}

TEST(Csv, ConvergenceRoundTripAndErrors) {
  std::vector<MetricsRow> rows{{1, 0.9, 0.9, std::nullopt}, {2, 0.85, 0.8, EvalMetrics{0.5, 0.1, 12.5}}};
  const std::string csv = convergence_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kConvergenceHeader);
  EXPECT_EQ(csv, convergence_csv(parse_convergence_csv(csv, "m.csv")));
  try {
    parse_convergence_csv(std::string(kConvergenceHeader) + "\n1,0.5,0.5,,,\n2,zero,0.4,,,\n", "runs/a/metrics.csv");
    FAIL();
  } catch (const CsvError& e) {
    EXPECT_NE(std::string(e.what()).find("runs/a/metrics.csv:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_convergence_csv("", "e.csv"), CsvError);
}

TEST_F(CliTest, TrainZeroStepsWritesInitialState) {
  RunConfig cfg = tiny_run(dir_ / "run");
  cfg.steps = 0;
  std::ostringstream log;
  cmd_train(cfg, log);
  const fs::path out = dir_ / "run";
  EXPECT_TRUE(fs::exists(out / kCheckpointFile));
  EXPECT_EQ(slurp(out / kMetricsFile), std::string(kConvergenceHeader) + "\n");
  EXPECT_EQ(format_config(load_config(out / kConfigFile)), format_config(cfg));
  EXPECT_EQ(encode_checkpoint(load_checkpoint(out / kCheckpointFile)), read_file(out / kCheckpointFile));
}

TEST_F(CliTest, TrainIsDeterministic) {
  std::ostringstream log;
  cmd_train(tiny_run(dir_ / "a"), log);
  cmd_train(tiny_run(dir_ / "b"), log);
  EXPECT_EQ(read_file(dir_ / "a" / kCheckpointFile), read_file(dir_ / "b" / kCheckpointFile));
  EXPECT_EQ(slurp(dir_ / "a" / kMetricsFile), slurp(dir_ / "b" / kMetricsFile));
  const auto rows = read_convergence_csv(dir_ / "a" / kMetricsFile);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_TRUE(rows[2].metrics.has_value());
  EXPECT_FALSE(rows[3].metrics.has_value());
}

TEST_F(CliTest, FinetuneTouchesOnlyLoraAndGates) {
  std::ostringstream log;
  cmd_train(tiny_run(dir_ / "pre"), log);
  RunConfig ft = tiny_run(dir_ / "ft");
  ft.mode = TrainMode::kFinetune;
  ft.base_checkpoint = (dir_ / "pre" / kCheckpointFile).string();
  cmd_train(ft, log);
  const ModelParams before = load_checkpoint(dir_ / "pre" / kCheckpointFile);
  const ModelParams after = load_checkpoint(dir_ / "ft" / kCheckpointFile);
  std::size_t changed = 0;
  for (const auto& [name, v] : after) {
    const auto it = before.find(name);
    if (it == before.end()) {
      EXPECT_EQ(param_kind(name), ParamKind::kLoRA) << name;
      continue;
    }
    if (v.value() == it->second.value()) continue;
    ++changed;
    EXPECT_NE(param_kind(name), ParamKind::kBackbone) << name;
  }
  EXPECT_GT(changed, 0u);
}

TEST_F(CliTest, FinetuneRejectsIncompatibleBase) {
  std::ostringstream log;
  cmd_train(tiny_run(dir_ / "pre"), log);
  RunConfig ft = tiny_run(dir_ / "ft");
  ft.mode = TrainMode::kFinetune;
  ft.model.d_model = 16;
  ft.base_checkpoint = (dir_ / "pre" / kCheckpointFile).string();
  EXPECT_THROW(cmd_train(ft, log), RuntimeFailure);
}

TEST_F(CliTest, SampleWritesPairsDeterministically) {
  std::ostringstream log;
  RunConfig cfg = tiny_run(dir_ / "run");
  cfg.mode = TrainMode::kScratch;
  cmd_train(cfg, log);
  const fs::path ckpt = dir_ / "run" / kCheckpointFile;

  cfg.output = (dir_ / "s1").string();
  const auto files = cmd_sample(cfg, {ckpt, 1}, log);
  EXPECT_EQ(files.size(), 2u);
  std::size_t on_disk = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "s1")) on_disk += e.is_regular_file();
  EXPECT_EQ(on_disk, 2u);
  cfg.output = (dir_ / "s2").string();
  const auto again = cmd_sample(cfg, {ckpt, 1}, log);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(read_file(files[i]), read_file(again[i]));

  for (std::size_t steps : {4u, 32u}) {
    cfg.sample_steps = steps;
    cfg.output = (dir_ / ("steps" + std::to_string(steps))).string();
    for (const auto& f : cmd_sample(cfg, {ckpt, 2}, log)) {
      const Tensor img = decode_ppm(read_file(f));
      EXPECT_EQ(img.shape(), (Shape{3, 8, 8}));
      for (double v : img.data()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
  }
  EXPECT_THROW(cmd_sample(cfg, {ckpt, 0}, log), UsageError);
}

TEST_F(CliTest, AblateGridAndErrors) {
  RunConfig cfg = tiny_run(dir_ / "grid");
  cfg.mode = TrainMode::kScratch;
  cfg.steps = 3;
  cfg.eval_interval = 0;
  cfg.seeds = {0};
  cfg.axes = {"granularity"};
  std::ostringstream log;
  const auto rows = cmd_ablate(cfg, 1, log);
  EXPECT_EQ(rows.size(), 3u);
  const std::string csv = slurp(dir_ / "grid" / "grid.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv, grid_csv(rows));
  std::size_t cells = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "grid" / "cells")) {
    ++cells;
    EXPECT_EQ(read_convergence_csv(e.path()).size(), 3u);
  }
  EXPECT_EQ(cells, 3u);

  cfg.axes.clear();
  try {
    cmd_ablate(cfg, 1, log);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_STREQ(e.what(), "no ablation axes");
  }
  cfg.axes = {"table3"};
  cfg.mode = TrainMode::kPretrain;
  EXPECT_THROW(cmd_ablate(cfg, 1, log), UsageError);
}

TEST(Bench, RowsAndCsv) {
  const auto rows = cmd_bench({16, 32}, 1);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].n, 16u);
  for (const auto& r : rows) {
    EXPECT_GT(r.softmax_ms, 0.0);
    EXPECT_GT(r.linear_ms, 0.0);
  }
  const std::string csv = bench_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,softmax_ms,linear_ms,ratio");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(cmd_bench({8}, 1).size(), 1u);
  EXPECT_THROW(cmd_bench({}, 1), UsageError);
}

void write_curve(const fs::path& dir, const std::vector<double>& losses) {
  fs::create_directories(dir);
  std::vector<MetricsRow> rows;
  const auto s = smooth(losses);
  for (std::size_t i = 0; i < losses.size(); ++i) rows.push_back({i + 1, s[i], losses[i], std::nullopt});
  write_text_atomic(dir / kMetricsFile, convergence_csv(rows));
}

TEST_F(CliTest, ReportOrdersSyntheticCurves) {
  std::vector<double> fast, slow;
  for (int i = 0; i < 100; ++i) {
    fast.push_back(1.0 / (1.0 + 0.2 * i));
    slow.push_back(1.0 / (1.0 + 0.05 * i));
  }
  write_curve(dir_ / "fast", fast);
  write_curve(dir_ / "slow", slow);
  const auto rows = build_report({dir_ / "fast", dir_ / "slow"});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_LT(rows[0].auc, rows[1].auc);
  EXPECT_NEAR(rows[0].auc, std::accumulate(fast.begin(), fast.end(), 0.0) / 100.0, 1e-12);
  EXPECT_EQ(rows[0].steps, 100u);
  ASSERT_TRUE(rows[0].steps_to_threshold.has_value());
  EXPECT_FALSE(rows[1].steps_to_threshold.has_value());
  const std::string csv = report_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kReportHeader);
  EXPECT_FALSE(report_summary(rows).empty());

  const auto single = build_report({dir_ / "slow"});
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].auc, rows[1].auc);
  EXPECT_EQ(single[0].final_loss, rows[1].final_loss);
}

TEST_F(CliTest, ReportErrors) {
  EXPECT_THROW(build_report({dir_ / "missing"}), UsageError);
  fs::create_directories(dir_ / "bad");
  write_text_atomic(dir_ / "bad" / kMetricsFile, std::string(kConvergenceHeader) + "\n1,0.5,0.5,,,\n2,0.4\n");
  try {
    build_report({dir_ / "bad"});
    FAIL();
  } catch (const CsvError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("metrics.csv:3"), std::string::npos) << msg;
  }
}

TEST_F(CliTest, BinaryExitCodes) {
  const std::string out = (dir_ / "x").string();
  EXPECT_EQ(run_cli("--help"), kExitOk);
  EXPECT_EQ(run_cli(""), kExitUsage);
  EXPECT_EQ(run_cli("train --no-such-flag"), kExitUsage);
  EXPECT_EQ(run_cli("train --lr fast --output " + out), kExitUsage);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run_cli("train --mode finetune --output " + out), kExitUsage);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run_cli("sample --checkpoint " + (dir_ / "none.gtck").string() + " --output " + out),
            kExitRuntime);
  EXPECT_EQ(run_cli("bench --sizes 8"), kExitOk);
  EXPECT_EQ(run_cli("bench --sizes 8,x"), kExitUsage);

  std::ofstream(dir_ / "bad.cfg") << "steps = 2\nnope = 1\n";
  EXPECT_EQ(run_cli("train --config " + (dir_ / "bad.cfg").string() + " --output " + out), kExitUsage);
  EXPECT_FALSE(fs::exists(out));

  const std::string tiny =
      " --image-size 8 --patch-size 2 --d-model 8 --n-blocks 1 --n-heads 2 --d-ffn 8 --n-classes 3"
      " --t-embed-dim 4 --lora-rank 2 --eval-samples 1 --sample-steps 2";
  EXPECT_EQ(run_cli("train --steps 2 --output " + out + tiny), kExitOk);
  EXPECT_TRUE(fs::exists(dir_ / "x" / kCheckpointFile));
  EXPECT_EQ(run_cli("sample --n 1 --checkpoint " + (dir_ / "x" / kCheckpointFile).string() + " --output " +
                    (dir_ / "y").string()),
            kExitOk);
  EXPECT_TRUE(fs::exists(dir_ / "y" / "sample_0_generated.ppm"));
}

}  // namespace
}  // namespace gatectl
