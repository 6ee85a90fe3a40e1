// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gatectl {

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::kEdge: return "edge";
    case TaskKind::kDeblur: return "deblur";
    case TaskKind::kColorize: return "colorize";
    case TaskKind::kSubject: return "subject";
  }
  return "?";
}

std::optional<TaskKind> parse_task(std::string_view name) {
  for (TaskKind t : {TaskKind::kEdge, TaskKind::kDeblur, TaskKind::kColorize, TaskKind::kSubject}) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

bool spatially_aligned(TaskKind task) { return task != TaskKind::kSubject; }

ShapeKind class_shape(std::size_t class_id) { return static_cast<ShapeKind>(class_id % 3); }

std::size_t class_hue_family(std::size_t class_id) { return (class_id / 3) % 2; }

namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

double sample_hue(std::size_t family, Rng& rng) {
  return family == 0 ? rng.uniform(0.0, 0.12) : rng.uniform(0.55, 0.7);
}

ShapeInstance random_shape(ShapeKind kind, double hue, std::size_t size, Rng& rng) {
  ShapeInstance s;
  s.kind = kind;
  s.hue = hue;
  s.rgb = hsv_to_rgb(hue, 0.85, 0.95);
  const double extent = static_cast<double>(size);
  s.half_w = rng.uniform(3.0, 7.0);
  s.half_h = kind == ShapeKind::kRectangle ? rng.uniform(3.0, 7.0) : s.half_w;
  s.cx = rng.uniform(s.half_w, extent - s.half_w);
  s.cy = rng.uniform(s.half_h, extent - s.half_h);
  return s;
}

bool covers(const ShapeInstance& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  switch (s.kind) {
    case ShapeKind::kDisc: return dx * dx + dy * dy <= s.half_w * s.half_w;
    case ShapeKind::kRectangle: return std::abs(dx) <= s.half_w && std::abs(dy) <= s.half_h;
    case ShapeKind::kTriangle: {
      // Apex at (cx, cy - h), base from (cx - w, cy + h) to (cx + w, cy + h).
      if (dy < -s.half_h || dy > s.half_h) return false;
      const double frac = (dy + s.half_h) / (2.0 * s.half_h);
      return std::abs(dx) <= frac * s.half_w;
    }
  }
  return false;
}

double clamp_index(std::ptrdiff_t i, std::size_t n) {
  return static_cast<double>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

void check_rgb(const Tensor& image, const char* what) {
  if (image.rank() != 3 || image.shape()[0] != 3 || image.shape()[1] != image.shape()[2]) {
    throw DimensionError(std::string(what) + ": expected a [3 x S x S] image, got " +
                         shape_str(image.shape()));
  }
}

Tensor replicate3(const Tensor& plane) {
  const std::size_t n = plane.size();
  const std::size_t s = plane.shape()[0];
  Tensor out({3, s, s});
  for (std::size_t c = 0; c < 3; ++c)
    std::copy(plane.data().begin(), plane.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(c * n));
  return out;
}

}  // namespace

Tensor render_shapes(const std::vector<ShapeInstance>& shapes, double background,
                     std::size_t image_size) {
  const std::size_t s = image_size;
  Tensor canvas({3, s, s}, background);
  for (const auto& shape : shapes) {
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        if (!covers(shape, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
        for (std::size_t c = 0; c < 3; ++c) canvas[(c * s + y) * s + x] = shape.rgb[c];
      }
  }
  return canvas;
}

ToyScene gen_scene(std::size_t class_id, Rng& rng, const SceneConfig& cfg) {
  if (class_id >= cfg.n_classes) {
    throw std::out_of_range("gen_scene: class id " + std::to_string(class_id) + " >= " +
                            std::to_string(cfg.n_classes));
  }
  ToyScene scene;
  scene.class_id = class_id;
  scene.background = rng.uniform(0.05, 0.35);
  const std::size_t count = 1 + rng.uniform_int(3);
  const ShapeKind kind = class_shape(class_id);
  const std::size_t family = class_hue_family(class_id);
  for (std::size_t i = 0; i < count; ++i) {
    const double hue = sample_hue(family, rng);
    scene.shapes.push_back(random_shape(kind, hue, cfg.image_size, rng));
  }
  scene.canvas = render_shapes(scene.shapes, scene.background, cfg.image_size);
  return scene;
}

Tensor luminance(const Tensor& image) {
  check_rgb(image, "luminance");
  const std::size_t s = image.shape()[1], n = s * s;
  Tensor out({s, s});
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 0.299 * image[i] + 0.587 * image[n + i] + 0.114 * image[2 * n + i];
  }
  return out;
}

Tensor edge_condition(const Tensor& image) {
  const Tensor lum = luminance(image);
  const std::size_t s = lum.shape()[0];
  auto px = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    const auto yy = static_cast<std::size_t>(clamp_index(y, s));
    const auto xx = static_cast<std::size_t>(clamp_index(x, s));
    return lum[yy * s + xx];
  };
  Tensor mag({s, s});
  double max_mag = 0.0;
  for (std::size_t yi = 0; yi < s; ++yi)
    for (std::size_t xi = 0; xi < s; ++xi) {
      const auto y = static_cast<std::ptrdiff_t>(yi), x = static_cast<std::ptrdiff_t>(xi);
      const double gx = (px(y - 1, x + 1) + 2.0 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2.0 * px(y, x - 1) + px(y + 1, x - 1));
      const double gy = (px(y + 1, x - 1) + 2.0 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2.0 * px(y - 1, x) + px(y - 1, x + 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      mag[yi * s + xi] = m;
      max_mag = std::max(max_mag, m);
    }
  Tensor edges({s, s});
  if (max_mag > 0.0) {
    const double threshold = 0.25 * max_mag;
    for (std::size_t i = 0; i < mag.size(); ++i) edges[i] = mag[i] > threshold ? 1.0 : 0.0;
  }
  return replicate3(edges);
}

Tensor blur_condition(const Tensor& image) {
  check_rgb(image, "blur_condition");
  const std::size_t s = image.shape()[1];
  Tensor cur = image;
  Tensor next(image.shape());
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t yi = 0; yi < s; ++yi)
        for (std::size_t xi = 0; xi < s; ++xi) {
          double acc = 0.0;
          for (std::ptrdiff_t dy = -2; dy <= 2; ++dy)
            for (std::ptrdiff_t dx = -2; dx <= 2; ++dx) {
              const auto y = static_cast<std::size_t>(
                  clamp_index(static_cast<std::ptrdiff_t>(yi) + dy, s));
              const auto x = static_cast<std::size_t>(
                  clamp_index(static_cast<std::ptrdiff_t>(xi) + dx, s));
              acc += cur[(c * s + y) * s + x];
            }
          next[(c * s + yi) * s + xi] = acc / 25.0;
        }
    std::swap(cur, next);
  }
  return cur;
}

Tensor gray_condition(const Tensor& image) { return replicate3(luminance(image)); }

Tensor subject_condition(const ToyScene& scene, Rng& rng) {
  if (scene.shapes.empty()) throw std::invalid_argument("subject_condition: scene has no shapes");
  const ShapeInstance& subject = scene.shapes.front();
  const std::size_t size = scene.canvas.shape()[1];
  ShapeInstance moved = random_shape(subject.kind, subject.hue, size, rng);
  moved.rgb = subject.rgb;
  return render_shapes({moved}, 0.5, size);
}

Tensor apply_condition(TaskKind task, const Tensor& image) {
  switch (task) {
    case TaskKind::kEdge: return edge_condition(image);
    case TaskKind::kDeblur: return blur_condition(image);
    case TaskKind::kColorize: return gray_condition(image);
    case TaskKind::kSubject: break;
  }
  throw std::invalid_argument("apply_condition: subject condition is not a function of the target");
}

TaskSample make_sample(TaskKind task, std::uint64_t seed, const SceneConfig& cfg) {
  Rng rng(seed);
  const std::size_t class_id = rng.uniform_int(cfg.n_classes);
  ToyScene scene = gen_scene(class_id, rng, cfg);
  TaskSample sample;
  sample.class_id = class_id;
  sample.condition = task == TaskKind::kSubject ? subject_condition(scene, rng)
                                                : apply_condition(task, scene.canvas);
  sample.target = std::move(scene.canvas);
  return sample;
}

std::vector<TaskSample> make_batch(TaskKind task, std::size_t batch_size, Rng& rng,
                                   const SceneConfig& cfg) {
  if (batch_size == 0) throw std::invalid_argument("make_batch: batch_size must be >= 1");
  const std::uint64_t batch_seed = rng.next_u64();
  std::vector<TaskSample> out(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) out[i] = make_sample(task, derive_seed(batch_seed, i), cfg);
  return out;
}

}  // namespace gatectl
