// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/gating.hpp"

#include <array>
#include <utility>

#include "gatectl/ops.hpp"

namespace gatectl {

namespace {

template <typename E, std::size_t N>
std::optional<E> parse_enum(std::string_view s,
                            const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

constexpr std::array<std::pair<std::string_view, Granularity>, 3> kGranularities{{
    {"token_wise", Granularity::kTokenWise},
    {"element_wise", Granularity::kElementWise},
    {"direct_add", Granularity::kDirectAdd},
}};

constexpr std::array<std::pair<std::string_view, GatePosition>, 3> kPositions{{
    {"after_self_attention", GatePosition::kAfterSelfAttention},
    {"after_cross_attention", GatePosition::kAfterCrossAttention},
    {"after_ffn", GatePosition::kAfterFfn},
}};

constexpr std::array<std::pair<std::string_view, ScoreSource>, 2> kScoreSources{{
    {"pre_attention", ScoreSource::kPreAttention},
    {"post_attention", ScoreSource::kPostAttention},
}};

template <typename E, std::size_t N>
std::string_view name_of(E value, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "?";
}

}  // namespace

std::string_view to_string(Granularity g) { return name_of(g, kGranularities); }
std::string_view to_string(GatePosition p) { return name_of(p, kPositions); }
std::string_view to_string(ScoreSource s) { return name_of(s, kScoreSources); }
std::optional<Granularity> parse_granularity(std::string_view s) {
  return parse_enum(s, kGranularities);
}
std::optional<GatePosition> parse_position(std::string_view s) {
  return parse_enum(s, kPositions);
}
std::optional<ScoreSource> parse_score_source(std::string_view s) {
  return parse_enum(s, kScoreSources);
}

std::string GateSpec::describe() const {
  std::string out = enabled ? "gate=on" : "gate=off";
  out += " granularity=" + std::string(to_string(granularity));
  out += " position=" + std::string(to_string(position));
  out += " score_source=" + std::string(to_string(score_source));
  out += interaction ? " interaction=on" : " interaction=off";
  return out;
}

GateParams GateParams::zeros(std::size_t d_model, Granularity granularity) {
  const std::size_t cols = granularity == Granularity::kElementWise ? d_model : 1;
  return {Var(Tensor::zeros({d_model, cols})), Var(Tensor::zeros({d_model, cols}))};
}

Var gate_modulate(const Var& h, const Var& score_input, const Var& w_g) {
  if (h.rows() != score_input.rows()) {
    throw FusionAlignmentError("gate_modulate: " + std::to_string(h.rows()) +
                               " hidden tokens but " + std::to_string(score_input.rows()) +
                               " score tokens");
  }
  if (w_g.cols() != 1 && w_g.cols() != h.cols()) {
    throw DimensionError("gate_modulate: gate weight " + shape_str(w_g.shape()) +
                         " for hidden " + shape_str(h.shape()));
  }
  return mul(h, sigmoid(matmul(score_input, w_g)));
}

Var gate_fuse(const Var& h_x, const Var& h_ci, const Var& x_in, const Var& c_in,
              const GateParams& params, const GateSpec& spec) {
  if (h_x.rows() != h_ci.rows()) {
    throw FusionAlignmentError("gate_fuse: " + std::to_string(h_x.rows()) +
                               " latent tokens vs " + std::to_string(h_ci.rows()) +
                               " condition tokens; fusion is index-wise");
  }
  if (!spec.enabled) return h_x;
  if (spec.granularity == Granularity::kDirectAdd) return add(h_x, h_ci);
  return add(gate_modulate(h_x, x_in, params.w_g1), gate_modulate(h_ci, c_in, params.w_g2));
}

std::size_t gate_param_count(std::size_t d_model, std::size_t n_blocks, Granularity granularity) {
  switch (granularity) {
    case Granularity::kTokenWise: return 2 * d_model * n_blocks;
    case Granularity::kElementWise: return 2 * d_model * d_model * n_blocks;
    case Granularity::kDirectAdd: return 0;
  }
  return 0;
}

std::size_t gate_param_count(std::size_t d_model, std::size_t n_blocks, const GateSpec& spec) {
  return spec.enabled ? gate_param_count(d_model, n_blocks, spec.granularity) : 0;
}

}  // namespace gatectl
