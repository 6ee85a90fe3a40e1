// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/model.hpp"

#include <cmath>
#include <stdexcept>

#include "gatectl/ops.hpp"
#include "gatectl/rng.hpp"

namespace gatectl {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (image_size == 0 || patch_size == 0 || channels == 0) fail("sizes must be positive");
  if (image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
  if (d_model == 0 || n_blocks == 0 || n_heads == 0 || d_ffn == 0) fail("widths must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (n_classes == 0) fail("n_classes must be positive");
  if (t_embed_dim == 0 || t_embed_dim % 2 != 0) fail("t_embed_dim must be even and positive");
}

// ---------------------------------------------------------------------------

const Segment* TokenSeq::find(Role role) const {
  for (const auto& s : segments) {
    if (s.role == role) return &s;
  }
  return nullptr;
}

void TokenSeq::validate() const {
  std::size_t next = 0;
  for (const auto& s : segments) {
    if (s.start != next || s.count == 0) {
      throw DimensionError("token segments must be ordered, disjoint and non-empty");
    }
    next += s.count;
  }
  if (next != values.rows()) {
    throw DimensionError("token segments cover " + std::to_string(next) + " of " +
                         std::to_string(values.rows()) + " rows");
  }
  const Segment* x = find(Role::kLatent);
  const Segment* ci = find(Role::kImageCondition);
  if (x && ci && x->count != ci->count) {
    throw FusionAlignmentError("latent and image-condition spans differ in length");
  }
}

TokenSeq assemble_tokens(const Var& x, const Var& ct, const Var& ci) {
  TokenSeq seq;
  std::vector<Var> parts{x, ct};
  seq.segments.push_back({Role::kLatent, 0, x.rows()});
  seq.segments.push_back({Role::kText, x.rows(), ct.rows()});
  if (ci.defined()) {
    parts.push_back(ci);
    seq.segments.push_back({Role::kImageCondition, x.rows() + ct.rows(), ci.rows()});
  }
  seq.values = concat_rows(parts);
  seq.validate();
  return seq;
}

// ---------------------------------------------------------------------------

ParamKind param_kind(std::string_view name) {
  if (name.starts_with("lora.")) return ParamKind::kLoRA;
  if (name.find(".gate.") != std::string_view::npos) return ParamKind::kGate;
  return ParamKind::kBackbone;
}

namespace {

std::string block_prefix(std::size_t b) { return "blocks." + std::to_string(b) + "."; }

void add_param(ModelParams& p, const std::string& name, Tensor value) {
  p.emplace(name, Var(std::move(value), true));
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x5ead));
  const std::size_t d = cfg.d_model;
  ModelParams p;

  add_param(p, "patch_embed.weight", rng.normal_tensor({cfg.patch_dim(), d}, inv_sqrt(cfg.patch_dim())));
  add_param(p, "pos_embed", rng.normal_tensor({cfg.n_tokens(), d}, 0.1));
  if (!cfg.share_condition_positions) {
    add_param(p, "cond_pos_embed", rng.normal_tensor({cfg.n_tokens(), d}, 0.1));
  }
  add_param(p, "class_embed", rng.normal_tensor({cfg.n_classes + 1, d}, 1.0));
  add_param(p, "time.w1", rng.normal_tensor({cfg.t_embed_dim, d}, inv_sqrt(cfg.t_embed_dim)));
  add_param(p, "time.w2", rng.normal_tensor({d, d}, inv_sqrt(d)));

  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    const std::string pre = block_prefix(b);
    for (const char* norm : {"norm1", "norm2", "norm3"}) {
      add_param(p, pre + norm + ".gain", Tensor::ones({d}));
      add_param(p, pre + norm + ".bias", Tensor::zeros({d}));
    }
    for (const char* attn : {"attn", "cross"}) {
      for (const char* w : {"q", "k", "v", "o"}) {
        add_param(p, pre + attn + "." + w, rng.normal_tensor({d, d}, inv_sqrt(d)));
      }
    }
    // Zero modulation at init: the FFN input starts as plain LN(h).
    add_param(p, pre + "ada.weight", Tensor::zeros({d, 2 * d}));
    add_param(p, pre + "ffn.w1", rng.normal_tensor({d, cfg.d_ffn}, inv_sqrt(d)));
    add_param(p, pre + "ffn.w2", rng.normal_tensor({cfg.d_ffn, d}, inv_sqrt(cfg.d_ffn)));
  }
  add_param(p, "final_norm.gain", Tensor::ones({d}));
  add_param(p, "final_norm.bias", Tensor::zeros({d}));
  add_param(p, "unembed.weight", Tensor::zeros({d, cfg.patch_dim()}));

  ensure_gate_params(p, cfg);
  return p;
}

void ensure_gate_params(ModelParams& params, const ModelConfig& cfg) {
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    const std::string pre = block_prefix(b) + "gate.";
    if (!cfg.gate.has_gate_params()) {
      params.erase(pre + "g1");
      params.erase(pre + "g2");
      continue;
    }
    GateParams g = GateParams::zeros(cfg.d_model, cfg.gate.granularity);
    for (auto [name, init] : {std::pair{pre + "g1", g.w_g1}, std::pair{pre + "g2", g.w_g2}}) {
      auto it = params.find(name);
      if (it != params.end() && it->second.shape() == init.shape()) continue;
      params.erase(name);
      add_param(params, name, init.value());
    }
  }
}

std::vector<std::string> lora_targets(const ModelConfig& cfg) {
  std::vector<std::string> out;
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    const std::string pre = block_prefix(b);
    for (const char* attn : {"attn", "cross"}) {
      for (const char* w : {"q", "k", "v", "o"}) out.push_back(pre + attn + "." + w);
    }
    out.push_back(pre + "ada.weight");
    out.push_back(pre + "ffn.w1");
    out.push_back(pre + "ffn.w2");
  }
  return out;
}

void add_lora(ModelParams& params, const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.lora_rank == 0) return;
  Rng rng(derive_seed(seed, 0x10a));
  for (const auto& target : lora_targets(cfg)) {
    const Var& w = params.at(target);
    add_param(params, "lora." + target + ".a",
              rng.normal_tensor({w.rows(), cfg.lora_rank}, inv_sqrt(w.rows())));
    add_param(params, "lora." + target + ".b", Tensor::zeros({cfg.lora_rank, w.cols()}));
  }
}

ModelParams merge_lora(const ModelParams& params, const ModelConfig& cfg) {
  ModelParams out;
  for (const auto& [name, v] : params) {
    if (param_kind(name) == ParamKind::kLoRA) continue;
    auto a = params.find("lora." + name + ".a");
    if (a == params.end()) {
      out.emplace(name, Var(v.value(), v.requires_grad()));
      continue;
    }
    const LoRAPair pair{a->second, params.at("lora." + name + ".b"), cfg.lora_scale()};
    out.emplace(name, Var(lora_apply(v, pair).value(), v.requires_grad()));
  }
  return out;
}

void set_trainable(ModelParams& params, TrainMode mode) {
  for (auto& [name, v] : params) {
    v.set_requires_grad(mode != TrainMode::kFinetune || param_kind(name) != ParamKind::kBackbone);
  }
}

ModelParams clone_params(const ModelParams& params) {
  ModelParams out;
  for (const auto& [name, v] : params) out.emplace(name, Var(v.value(), v.requires_grad()));
  return out;
}

ParamCounts param_counts(const ModelParams& params) {
  ParamCounts c;
  for (const auto& [name, v] : params) {
    const std::size_t n = v.size();
    switch (param_kind(name)) {
      case ParamKind::kBackbone: c.backbone += n; break;
      case ParamKind::kGate: c.gate += n; break;
      case ParamKind::kLoRA: c.lora += n; break;
    }
    c.total += n;
    if (v.requires_grad()) c.trainable += n;
  }
  return c;
}

std::size_t count_params(const ModelParams& params, bool trainable_only) {
  const ParamCounts c = param_counts(params);
  return trainable_only ? c.trainable : c.total;
}

// ---------------------------------------------------------------------------

Tensor image_to_patches(const Tensor& image, const ModelConfig& cfg) {
  if (image.shape() != cfg.image_shape()) {
    throw DimensionError("patchify: image " + shape_str(image.shape()) + ", expected " +
                         shape_str(cfg.image_shape()));
  }
  const std::size_t p = cfg.patch_size, g = cfg.grid(), s = cfg.image_size;
  Tensor out({cfg.n_tokens(), cfg.patch_dim()});
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      double* row = out.data().data() + (gy * g + gx) * cfg.patch_dim();
      for (std::size_t c = 0; c < cfg.channels; ++c)
        for (std::size_t py = 0; py < p; ++py)
          for (std::size_t px = 0; px < p; ++px)
            *row++ = image[(c * s + gy * p + py) * s + gx * p + px];
    }
  return out;
}

Tensor patches_to_image(const Tensor& patches, const ModelConfig& cfg) {
  if (patches.rows() != cfg.n_tokens() || patches.cols() != cfg.patch_dim()) {
    throw DimensionError("unpatchify: patches " + shape_str(patches.shape()) + " for " +
                         std::to_string(cfg.n_tokens()) + " tokens of width " +
                         std::to_string(cfg.patch_dim()));
  }
  const std::size_t p = cfg.patch_size, g = cfg.grid(), s = cfg.image_size;
  Tensor out(cfg.image_shape());
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      const double* row = patches.data().data() + (gy * g + gx) * cfg.patch_dim();
      for (std::size_t c = 0; c < cfg.channels; ++c)
        for (std::size_t py = 0; py < p; ++py)
          for (std::size_t px = 0; px < p; ++px)
            out[(c * s + gy * p + py) * s + gx * p + px] = *row++;
    }
  return out;
}

Var patchify(const Tensor& image, const ModelConfig& cfg, const ModelParams& params,
             const std::string& pos_name) {
  const Var patches(image_to_patches(image, cfg));
  return add(matmul(patches, params.at("patch_embed.weight")), params.at(pos_name));
}

Var unembed(const Var& tokens, const ModelParams& params) {
  return matmul(tokens, params.at("unembed.weight"));
}

Tensor unpatchify(const Var& tokens, const ModelConfig& cfg, const ModelParams& params) {
  if (tokens.rows() != cfg.n_tokens()) {
    throw DimensionError("unpatchify: " + std::to_string(tokens.rows()) + " tokens, expected " +
                         std::to_string(cfg.n_tokens()));
  }
  return patches_to_image(unembed(tokens, params).value(), cfg);
}

Tensor sinusoidal_embedding(double t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor out({1, dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                 static_cast<double>(half));
    const double arg = 1000.0 * t * freq;
    out[2 * i] = std::sin(arg);
    out[2 * i + 1] = std::cos(arg);
  }
  return out;
}

ConditionTokens embed_condition_tokens(const Tensor* cond_image, std::size_t class_id, double t,
                                       const ModelConfig& cfg, const ModelParams& params) {
  if (class_id > cfg.null_class()) {
    throw ClassRangeError("class id " + std::to_string(class_id) + " outside [0, " +
                          std::to_string(cfg.n_classes) + "]");
  }
  ConditionTokens out;
  if (cond_image != nullptr) {
    out.ci = patchify(*cond_image, cfg, params,
                      cfg.share_condition_positions ? "pos_embed" : "cond_pos_embed");
  }
  out.ct = slice_rows(params.at("class_embed"), class_id, 1);
  const Var emb(sinusoidal_embedding(t, cfg.t_embed_dim));
  out.t_vec = matmul(silu(matmul(emb, params.at("time.w1"))), params.at("time.w2"));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Linear make_linear(const ModelParams& params, const std::string& name, const ModelConfig& cfg) {
  Linear l{params.at(name), std::nullopt};
  auto a = params.find("lora." + name + ".a");
  if (a != params.end()) l.lora = LoRAPair{a->second, params.at("lora." + name + ".b"), cfg.lora_scale()};
  return l;
}

AttentionParams make_attention(const ModelParams& params, const std::string& pre,
                               const ModelConfig& cfg) {
  AttentionParams a;
  a.w_q = make_linear(params, pre + ".q", cfg);
  a.w_k = make_linear(params, pre + ".k", cfg);
  a.w_v = make_linear(params, pre + ".v", cfg);
  a.w_o = make_linear(params, pre + ".o", cfg);
  a.n_heads = cfg.n_heads;
  a.d_head = cfg.d_head();
  return a;
}

Var broadcast_row(const Var& row, std::size_t n) {
  return matmul(Var(Tensor::ones({n, 1})), row);
}

}  // namespace

BlockWeights block_weights(const ModelParams& params, const ModelConfig& cfg, std::size_t block) {
  const std::string pre = block_prefix(block);
  BlockWeights w;
  w.norm1_gain = params.at(pre + "norm1.gain");
  w.norm1_bias = params.at(pre + "norm1.bias");
  w.norm2_gain = params.at(pre + "norm2.gain");
  w.norm2_bias = params.at(pre + "norm2.bias");
  w.norm3_gain = params.at(pre + "norm3.gain");
  w.norm3_bias = params.at(pre + "norm3.bias");
  w.self_attn = make_attention(params, pre + "attn", cfg);
  w.cross_attn = make_attention(params, pre + "cross", cfg);
  w.ada = make_linear(params, pre + "ada.weight", cfg);
  w.ffn_in = make_linear(params, pre + "ffn.w1", cfg);
  w.ffn_out = make_linear(params, pre + "ffn.w2", cfg);
  if (cfg.gate.has_gate_params()) {
    w.gate.w_g1 = params.at(pre + "gate.g1");
    w.gate.w_g2 = params.at(pre + "gate.g2");
  }
  return w;
}

Var self_attention_branch(const Var& x, const BlockWeights& w, bool normalized) {
  return linear_self_attention(layer_norm(x, w.norm1_gain, w.norm1_bias), w.self_attn, normalized);
}

Var cross_attention_branch(const Var& h, const Var& ct, const BlockWeights& w) {
  return cross_attention(layer_norm(h, w.norm2_gain, w.norm2_bias), ct, w.cross_attn);
}

Var ffn_branch(const Var& h, const Var& t_vec, const BlockWeights& w) {
  const std::size_t d = h.cols();
  const Var mod = w.ada(silu(t_vec));
  const Var scale_row = add_scalar(slice_cols(mod, 0, d), 1.0);
  const Var shift_row = slice_cols(mod, d, d);
  const std::size_t n = h.rows();
  const Var m = add(mul(layer_norm(h, w.norm3_gain, w.norm3_bias), broadcast_row(scale_row, n)),
                    broadcast_row(shift_row, n));
  return w.ffn_out(gelu(w.ffn_in(m)));
}

Var self_attention_stage(const Var& x, const BlockWeights& w, bool normalized) {
  return add(x, self_attention_branch(x, w, normalized));
}

Var cross_attention_stage(const Var& h, const Var& ct, const BlockWeights& w) {
  return add(h, cross_attention_branch(h, ct, w));
}

Var ffn_stage(const Var& h, const Var& t_vec, const BlockWeights& w) {
  return add(h, ffn_branch(h, t_vec, w));
}

BlockOutput block_forward(const Var& x, const Var& ci, const Var& ct, const Var& t_vec,
                          const BlockWeights& w, const ModelConfig& cfg) {
  const GateSpec& spec = cfg.gate;
  const bool normalized = cfg.normalized_linear_attention;
  if (!ci.defined()) {
    Var h = self_attention_stage(x, w, normalized);
    h = cross_attention_stage(h, ct, w);
    return {ffn_stage(h, t_vec, w), Var()};
  }
  if (spec.enabled && x.rows() != ci.rows()) {
    throw FusionAlignmentError("block_forward: " + std::to_string(x.rows()) +
                               " latent tokens vs " + std::to_string(ci.rows()) +
                               " condition tokens");
  }

  // Self-attention branch outputs; pre-attention gate scores read the
  // normalized self-attention input.
  Var d_x, d_c, in_x, in_c;
  if (spec.interaction) {
    const Var a = layer_norm(concat_rows({x, ci}), w.norm1_gain, w.norm1_bias);
    const Var s = linear_self_attention(a, w.self_attn, normalized);
    in_x = slice_rows(a, 0, x.rows());
    in_c = slice_rows(a, x.rows(), ci.rows());
    d_x = slice_rows(s, 0, x.rows());
    d_c = slice_rows(s, x.rows(), ci.rows());
  } else {
    in_x = layer_norm(x, w.norm1_gain, w.norm1_bias);
    in_c = layer_norm(ci, w.norm1_gain, w.norm1_bias);
    d_x = linear_self_attention(in_x, w.self_attn, normalized);
    d_c = linear_self_attention(in_c, w.self_attn, normalized);
  }

  // Latent residual update for one stage. At the fusion position the gate
  // combines the two branch outputs before the residual add, or the two
  // residual streams after it when cfg.gate_residual_stream is set.
  const bool pre = spec.score_source == ScoreSource::kPreAttention;
  auto latent_stage = [&](GatePosition position, const Var& h, const Var& bx, const Var& bc,
                          const Var& h_c) {
    if (!spec.enabled || spec.position != position) return add(h, bx);
    if (cfg.gate_residual_stream) {
      const Var r = add(h, bx);
      return gate_fuse(r, h_c, pre ? in_x : r, pre ? in_c : h_c, w.gate, spec);
    }
    return add(h, gate_fuse(bx, bc, pre ? in_x : bx, pre ? in_c : bc, w.gate, spec));
  };

  Var h_c = add(ci, d_c);
  Var h_x = latent_stage(GatePosition::kAfterSelfAttention, x, d_x, d_c, h_c);

  d_x = cross_attention_branch(h_x, ct, w);
  d_c = cross_attention_branch(h_c, ct, w);
  h_c = add(h_c, d_c);
  h_x = latent_stage(GatePosition::kAfterCrossAttention, h_x, d_x, d_c, h_c);

  d_x = ffn_branch(h_x, t_vec, w);
  d_c = ffn_branch(h_c, t_vec, w);
  h_c = add(h_c, d_c);
  h_x = latent_stage(GatePosition::kAfterFfn, h_x, d_x, d_c, h_c);
  return {h_x, h_c};
}

Var forward_patches(const Tensor& x_t, double t, const Conditioning& cond,
                    const ModelParams& params, const ModelConfig& cfg) {
  if (!x_t.all_finite() || !std::isfinite(t)) {
    throw NonFiniteError("model_forward: non-finite input");
  }
  const std::size_t class_id = cond.dropped ? cfg.null_class() : cond.class_id;
  ConditionTokens tokens = embed_condition_tokens(cond.image, class_id, t, cfg, params);
  if (cond.image != nullptr && cond.dropped) {
    tokens.ci = Var(Tensor::zeros({cfg.n_tokens(), cfg.d_model}));
  }

  Var x = patchify(x_t, cfg, params);
  Var ci = tokens.ci;
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    const BlockOutput out = block_forward(x, ci, tokens.ct, tokens.t_vec,
                                          block_weights(params, cfg, b), cfg);
    x = out.x;
    ci = out.ci;
    if (!x.value().all_finite() || (ci.defined() && !ci.value().all_finite())) {
      throw NonFiniteError("model_forward: non-finite activation after block " +
                           std::to_string(b));
    }
  }
  x = layer_norm(x, params.at("final_norm.gain"), params.at("final_norm.bias"));
  return unembed(x, params);
}

Tensor model_forward(const Tensor& x_t, double t, const Conditioning& cond,
                     const ModelParams& params, const ModelConfig& cfg) {
  return patches_to_image(forward_patches(x_t, t, cond, params, cfg).value(), cfg);
}

}  // namespace gatectl
