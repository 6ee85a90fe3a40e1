// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoints, CSV tables and P6 pixmaps.
//
// Checkpoint layout, all integers little-endian u32:
//   "GTCK" | version=1 | tensor count |
//   per tensor: name length | UTF-8 name | rank | dims... | f32 LE payload |
//   CRC32 of every preceding byte.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gatectl/eval.hpp"
#include "gatectl/model.hpp"

namespace gatectl {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::uint32_t crc32(std::span<const std::uint8_t> data);

/// Tensors are written in name order; values are rounded to f32.
Bytes encode_checkpoint(const ModelParams& params);
/// Loaded tensors do not require gradients. `origin` names the source in errors.
ModelParams decode_checkpoint(std::span<const std::uint8_t> data, const std::string& origin);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

/// Writes through a temporary sibling and a rename, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
Bytes read_file(const std::filesystem::path& path);

/// P6, maxval 255; values are clamped to [0, 1] and rounded.
Bytes encode_ppm(const Tensor& image);
Tensor decode_ppm(std::span<const std::uint8_t> data);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

/// Shortest round-trippable form; "nan" / "inf" / "-inf" for non-finite values.
std::string format_double(double v);

inline constexpr const char* kConvergenceHeader = "step,loss_smoothed,loss_raw,edge_f1,mse,psnr";
inline constexpr const char* kGridHeader =
    "variant,seed,final_loss,edge_f1,mse,psnr,steps_to_threshold";

/// One row per step; evaluation columns are empty on steps without an eval.
std::string convergence_csv(const std::vector<MetricsRow>& rows);
/// Throws CsvError naming `origin` and the 1-based line on malformed input.
std::vector<MetricsRow> parse_convergence_csv(const std::string& text, const std::string& origin);
std::vector<MetricsRow> read_convergence_csv(const std::filesystem::path& path);

/// Diverged or failed cells carry "nan" metrics and "diverged" in the
/// steps_to_threshold column; unreached thresholds are written as "inf".
std::string grid_csv(const std::vector<GridRow>& rows);

}  // namespace gatectl
