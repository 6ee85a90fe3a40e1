// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Procedural toy scenes and the condition images derived from them.
//
// A class id fixes the shape type (id % 3: disc, rectangle, triangle) and the
// hue family (id / 3 % 2: warm, cool); it plays the role of the text prompt.

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "gatectl/rng.hpp"
#include "gatectl/tensor.hpp"

namespace gatectl {

enum class ShapeKind { kDisc, kRectangle, kTriangle };

struct ShapeInstance {
  ShapeKind kind = ShapeKind::kDisc;
  double cx = 0.0;
  double cy = 0.0;
  double half_w = 0.0;  // radius for discs
  double half_h = 0.0;
  double hue = 0.0;
  std::array<double, 3> rgb{};
};

struct ToyScene {
  std::size_t class_id = 0;
  double background = 0.0;
  std::vector<ShapeInstance> shapes;
  Tensor canvas;  // [3 x S x S] in [0, 1]
};

struct SceneConfig {
  std::size_t image_size = 32;
  std::size_t n_classes = 6;
};

enum class TaskKind { kEdge, kDeblur, kColorize, kSubject };

std::string_view to_string(TaskKind task);
std::optional<TaskKind> parse_task(std::string_view name);
bool spatially_aligned(TaskKind task);

ShapeKind class_shape(std::size_t class_id);
std::size_t class_hue_family(std::size_t class_id);

/// Deterministic given (class_id, rng state). Shapes lie fully inside the canvas.
ToyScene gen_scene(std::size_t class_id, Rng& rng, const SceneConfig& cfg = {});
Tensor render_shapes(const std::vector<ShapeInstance>& shapes, double background,
                     std::size_t image_size);

/// 0.299 R + 0.587 G + 0.114 B as an [S x S] map.
Tensor luminance(const Tensor& image);
/// Sobel magnitude of the luminance (edge-clamped borders), thresholded at
/// 0.25 of its maximum, replicated to 3 channels. Values are 0 or 1.
Tensor edge_condition(const Tensor& image);
/// 5x5 box blur with clamped borders, applied twice.
Tensor blur_condition(const Tensor& image);
/// Luminance replicated to 3 channels.
Tensor gray_condition(const Tensor& image);
/// The scene's first shape re-rendered at a new random position and size on
/// a uniform 0.5 background.
Tensor subject_condition(const ToyScene& scene, Rng& rng);

/// The condition operator of a spatially aligned task. Throws for kSubject,
/// whose condition is not a function of the target.
Tensor apply_condition(TaskKind task, const Tensor& image);

struct TaskSample {
  Tensor target;
  Tensor condition;
  std::size_t class_id = 0;
};

/// Draws one batch seed from `rng`; sample i is generated from
/// derive_seed(batch seed, i), so batches are reproducible and each sample
/// can be generated independently.
std::vector<TaskSample> make_batch(TaskKind task, std::size_t batch_size, Rng& rng,
                                   const SceneConfig& cfg = {});
TaskSample make_sample(TaskKind task, std::uint64_t seed, const SceneConfig& cfg = {});

}  // namespace gatectl
