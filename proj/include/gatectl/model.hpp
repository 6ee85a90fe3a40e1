// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gatectl/attention.hpp"
#include "gatectl/gating.hpp"
#include "gatectl/linear.hpp"

namespace gatectl {

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t patch_size = 4;
  std::size_t d_model = 64;
  std::size_t n_blocks = 4;
  std::size_t n_heads = 4;
  std::size_t d_ffn = 256;
  std::size_t n_classes = 6;
  std::size_t t_embed_dim = 32;
  std::size_t lora_rank = 16;
  GateSpec gate;
  bool normalized_linear_attention = true;
  // Condition tokens reuse the latent positional embedding at the same index.
  bool share_condition_positions = true;
  // Fusion operands: false gates the latent and condition branch outputs
  // before the residual add; true gates the two residual streams after it.
  bool gate_residual_stream = false;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t n_tokens() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t d_head() const { return d_model / n_heads; }
  std::size_t null_class() const { return n_classes; }
  double lora_scale() const { return lora_rank ? 1.0 / static_cast<double>(lora_rank) : 0.0; }
  Shape image_shape() const { return {channels, image_size, image_size}; }

  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Token sequences

enum class Role { kLatent, kText, kImageCondition };

struct Segment {
  Role role;
  std::size_t start;
  std::size_t count;
};

struct TokenSeq {
  Var values;  // [n_tokens x d_model]
  std::vector<Segment> segments;

  const Segment* find(Role role) const;
  /// Spans must be disjoint, ordered and cover every row.
  void validate() const;
};

/// [X; C_T; C_I] as one sequence. `ci` may be undefined (no image condition).
TokenSeq assemble_tokens(const Var& x, const Var& ct, const Var& ci);

// ---------------------------------------------------------------------------
// Parameters

using ModelParams = std::map<std::string, Var>;

enum class ParamKind { kBackbone, kGate, kLoRA };
ParamKind param_kind(std::string_view name);

// kPretrain: condition-free, everything trains. kFinetune: conditional, only
// LoRA pairs and gates train. kScratch: conditional, everything trains.
enum class TrainMode { kPretrain, kFinetune, kScratch };

/// Backbone weights plus zero-initialized gates when the spec uses them.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
/// Names of the block weights that receive LoRA pairs.
std::vector<std::string> lora_targets(const ModelConfig& cfg);
/// Adds `lora.<target>.a` / `.b` for every target; B starts at zero.
void add_lora(ModelParams& params, const ModelConfig& cfg, std::uint64_t seed);
/// Makes the gate tensors match cfg.gate: adds zero-initialized gates when
/// missing or mis-shaped, removes them when the spec has none.
void ensure_gate_params(ModelParams& params, const ModelConfig& cfg);
/// Folds every LoRA pair into its target weight and drops the pairs.
ModelParams merge_lora(const ModelParams& params, const ModelConfig& cfg);
void set_trainable(ModelParams& params, TrainMode mode);
/// Deep copy: fresh Vars with the same values and requires_grad flags.
ModelParams clone_params(const ModelParams& params);

struct ParamCounts {
  std::size_t backbone = 0;
  std::size_t lora = 0;
  std::size_t gate = 0;
  std::size_t total = 0;
  std::size_t trainable = 0;
};
ParamCounts param_counts(const ModelParams& params);
std::size_t count_params(const ModelParams& params, bool trainable_only);

// ---------------------------------------------------------------------------
// Forward pass

/// [c x H x W] -> [(H/p)^2 x p*p*c], patches in row-major order, each patch
/// flattened channel-major.
Tensor image_to_patches(const Tensor& image, const ModelConfig& cfg);
Tensor patches_to_image(const Tensor& patches, const ModelConfig& cfg);

/// Linear patch embedding plus positional embedding `pos_name`.
Var patchify(const Tensor& image, const ModelConfig& cfg, const ModelParams& params,
             const std::string& pos_name = "pos_embed");
/// Projects tokens back to patches and reassembles the image.
Tensor unpatchify(const Var& tokens, const ModelConfig& cfg, const ModelParams& params);
/// Differentiable half of unpatchify: tokens -> patch matrix.
Var unembed(const Var& tokens, const ModelParams& params);

/// Interleaved [sin, cos] pairs of 1000 t at geometric frequencies.
Tensor sinusoidal_embedding(double t, std::size_t dim);

struct ConditionTokens {
  Var ci;     // undefined when there is no image condition
  Var ct;     // [1 x d_model]
  Var t_vec;  // [1 x d_model]
};

class ClassRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// C_I through the latent's patch embedding, C_T from the class table and the
/// time vector from the sinusoid-plus-MLP. `class_id` may be null_class().
ConditionTokens embed_condition_tokens(const Tensor* cond_image, std::size_t class_id, double t,
                                       const ModelConfig& cfg, const ModelParams& params);

struct BlockWeights {
  Var norm1_gain, norm1_bias;
  AttentionParams self_attn;
  Var norm2_gain, norm2_bias;
  AttentionParams cross_attn;
  Var norm3_gain, norm3_bias;
  Linear ada;  // t_vec -> [scale | shift]
  Linear ffn_in, ffn_out;
  GateParams gate;  // undefined Vars when the spec has no gate parameters
};

BlockWeights block_weights(const ModelParams& params, const ModelConfig& cfg, std::size_t block);

struct BlockOutput {
  Var x;
  Var ci;
};

// The three residual branches of a block and the stages input + branch,
// exposed so tests can assemble reference blocks from the same pieces.
Var self_attention_branch(const Var& x, const BlockWeights& w, bool normalized);
Var cross_attention_branch(const Var& h, const Var& ct, const BlockWeights& w);
Var ffn_branch(const Var& h, const Var& t_vec, const BlockWeights& w);
Var self_attention_stage(const Var& x, const BlockWeights& w, bool normalized);
Var cross_attention_stage(const Var& h, const Var& ct, const BlockWeights& w);
Var ffn_stage(const Var& h, const Var& t_vec, const BlockWeights& w);

/// One transformer block over the latent stream and optional condition stream
/// (`ci` undefined means condition-free).
BlockOutput block_forward(const Var& x, const Var& ci, const Var& ct, const Var& t_vec,
                          const BlockWeights& w, const ModelConfig& cfg);

struct Conditioning {
  const Tensor* image = nullptr;  // null: condition-free model
  std::size_t class_id = 0;
  // Unconditional pathway: condition tokens zeroed, null class.
  bool dropped = false;
};

/// Velocity prediction in patch layout [n_tokens x patch_dim].
Var forward_patches(const Tensor& x_t, double t, const Conditioning& cond,
                    const ModelParams& params, const ModelConfig& cfg);
/// Velocity prediction as an image [c x H x W].
Tensor model_forward(const Tensor& x_t, double t, const Conditioning& cond,
                     const ModelParams& params, const ModelConfig& cfg);

}  // namespace gatectl
