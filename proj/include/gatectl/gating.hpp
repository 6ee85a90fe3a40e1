// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Gated modulation and fusion of latent and image-condition hidden states.
//
//   h_X'  = sigmoid(X   W_g1) (.) h_X
//   h_CI' = sigmoid(C_I W_g2) (.) h_CI
//   h_X  <- h_X' + h_CI'
//
// Token-wise gates produce one score per token (W_g: [d x 1]); element-wise
// gates one score per element (W_g: [d x d]). Direct addition drops the
// scores entirely and reduces to the additive h_x <- h_x + h_c baseline.

#include <optional>
#include <string>
#include <string_view>

#include "gatectl/autodiff.hpp"

namespace gatectl {

enum class Granularity { kTokenWise, kElementWise, kDirectAdd };
enum class GatePosition { kAfterSelfAttention, kAfterCrossAttention, kAfterFfn };
enum class ScoreSource { kPreAttention, kPostAttention };

struct GateSpec {
  // false: no fusion at all; conditioning flows only through attention.
  bool enabled = true;
  Granularity granularity = Granularity::kTokenWise;
  GatePosition position = GatePosition::kAfterSelfAttention;
  ScoreSource score_source = ScoreSource::kPreAttention;
  // Joint self-attention over [X; C_I] when true, separate streams otherwise.
  bool interaction = true;

  bool has_gate_params() const { return enabled && granularity != Granularity::kDirectAdd; }
  std::string describe() const;

  friend bool operator==(const GateSpec&, const GateSpec&) = default;
};

std::string_view to_string(Granularity g);
std::string_view to_string(GatePosition p);
std::string_view to_string(ScoreSource s);
std::optional<Granularity> parse_granularity(std::string_view s);
std::optional<GatePosition> parse_position(std::string_view s);
std::optional<ScoreSource> parse_score_source(std::string_view s);

/// Raised when latent and condition token counts differ at a fusion point.
class FusionAlignmentError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

struct GateParams {
  Var w_g1;  // latent gate
  Var w_g2;  // condition gate

  /// Zero-initialized, so every initial score is sigmoid(0) = 0.5.
  static GateParams zeros(std::size_t d_model, Granularity granularity);
};

/// sigmoid(score_input * w_g) (.) h. A [d x 1] w_g yields one score per token,
/// broadcast across h's columns; a [d x d] w_g yields one per element.
Var gate_modulate(const Var& h, const Var& score_input, const Var& w_g);

/// Fuses the condition stream into the latent stream index-wise.
/// `x_in` / `c_in` are the score inputs for the latent / condition gates.
Var gate_fuse(const Var& h_x, const Var& h_ci, const Var& x_in, const Var& c_in,
              const GateParams& params, const GateSpec& spec);

std::size_t gate_param_count(std::size_t d_model, std::size_t n_blocks, Granularity granularity);
std::size_t gate_param_count(std::size_t d_model, std::size_t n_blocks, const GateSpec& spec);

}  // namespace gatectl
