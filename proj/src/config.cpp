// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "gatectl/io.hpp"

namespace gatectl {

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::string out;
  for (const auto& e : errors) out += (out.empty() ? "" : "\n") + e;
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string quote(std::string_view s) { return "'" + std::string(s) + "'"; }

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a non-negative integer, got " + quote(s));
  }
  return v;
}

std::size_t parse_size(std::string_view s) { return static_cast<std::size_t>(parse_u64(s)); }

double parse_real(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a finite number, got " + quote(s));
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "on" || s == "1") return true;
  if (s == "false" || s == "off" || s == "0") return false;
  throw std::invalid_argument("expected true/false, got " + quote(s));
}

std::vector<std::string> parse_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

TrainMode parse_mode(std::string_view s) {
  if (s == "pretrain") return TrainMode::kPretrain;
  if (s == "finetune") return TrainMode::kFinetune;
  if (s == "scratch") return TrainMode::kScratch;
  throw std::invalid_argument("expected pretrain|finetune|scratch, got " + quote(s));
}

template <typename T>
T must(std::optional<T> v, std::string_view s, const char* choices) {
  if (!v) throw std::invalid_argument(std::string("expected ") + choices + ", got " + quote(s));
  return *v;
}

struct KeyOps {
  ConfigKey key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GATECTL_SIZE_KEY(name, field, help)                                              \
  KeyOps {                                                                               \
    {name, help}, [](RunConfig& c, std::string_view v) { c.field = parse_size(v); },     \
        [](const RunConfig& c) { return std::to_string(c.field); }                       \
  }
#define GATECTL_REAL_KEY(name, field, help)                                              \
  KeyOps {                                                                               \
    {name, help}, [](RunConfig& c, std::string_view v) { c.field = parse_real(v); },     \
        [](const RunConfig& c) { return format_double(c.field); }                        \
  }
#define GATECTL_BOOL_KEY(name, field, help)                                              \
  KeyOps {                                                                               \
    {name, help}, [](RunConfig& c, std::string_view v) { c.field = parse_bool(v); },     \
        [](const RunConfig& c) { return bool_str(c.field); }                             \
  }

const std::vector<KeyOps>& key_table() {
  static const std::vector<KeyOps> table = {
      KeyOps{{"task", "edge | deblur | colorize | subject"},
             [](RunConfig& c, std::string_view v) {
               c.task = must(parse_task(v), v, "edge|deblur|colorize|subject");
             },
             [](const RunConfig& c) { return std::string(to_string(c.task)); }},
      KeyOps{{"mode", "pretrain (condition-free) | finetune (LoRA + gates) | scratch"},
             [](RunConfig& c, std::string_view v) { c.mode = parse_mode(v); },
             [](const RunConfig& c) { return std::string(to_string(c.mode)); }},
      GATECTL_SIZE_KEY("steps", steps, "optimizer steps"),
      GATECTL_SIZE_KEY("batch_size", batch_size, "examples per step"),
      KeyOps{{"seed", "run seed"},
             [](RunConfig& c, std::string_view v) { c.seed = parse_u64(v); },
             [](const RunConfig& c) { return std::to_string(c.seed); }},
      KeyOps{{"output", "output directory"},
             [](RunConfig& c, std::string_view v) {
               if (v.empty()) throw std::invalid_argument("output must not be empty");
               c.output = std::string(v);
             },
             [](const RunConfig& c) { return c.output; }},
      GATECTL_SIZE_KEY("eval_interval", eval_interval, "steps between evaluations and checkpoints (0: end only)"),
      GATECTL_SIZE_KEY("eval_samples", eval_samples, "samples per evaluation"),
      GATECTL_SIZE_KEY("sample_steps", sample_steps, "Euler steps when sampling"),
      GATECTL_REAL_KEY("guidance_scale", guidance_scale, "classifier-free guidance scale"),
      GATECTL_REAL_KEY("lr", lr, "Adam learning rate"),
      GATECTL_REAL_KEY("weight_decay", weight_decay, "decoupled weight decay"),
      GATECTL_REAL_KEY("condition_dropout", condition_dropout, "probability of the unconditional pathway in training"),
      KeyOps{{"base_checkpoint", "checkpoint a finetune run starts from"},
             [](RunConfig& c, std::string_view v) { c.base_checkpoint = std::string(v); },
             [](const RunConfig& c) { return c.base_checkpoint; }},
      KeyOps{{"seeds", "comma-separated seeds for ablate"},
             [](RunConfig& c, std::string_view v) {
               std::vector<std::uint64_t> seeds;
               for (const auto& s : parse_list(v)) seeds.push_back(parse_u64(s));
               c.seeds = std::move(seeds);
             },
             [](const RunConfig& c) { return join(c.seeds); }},
      KeyOps{{"axes", "ablation axes: table3 | gating,granularity,position,score_source,interaction"},
             [](RunConfig& c, std::string_view v) { c.axes = parse_list(v); },
             [](const RunConfig& c) { return join(c.axes); }},
      GATECTL_SIZE_KEY("image_size", model.image_size, "image side in pixels"),
      GATECTL_SIZE_KEY("patch_size", model.patch_size, "patch side in pixels"),
      GATECTL_SIZE_KEY("d_model", model.d_model, "token width"),
      GATECTL_SIZE_KEY("n_blocks", model.n_blocks, "transformer blocks"),
      GATECTL_SIZE_KEY("n_heads", model.n_heads, "attention heads"),
      GATECTL_SIZE_KEY("d_ffn", model.d_ffn, "FFN hidden width"),
      GATECTL_SIZE_KEY("n_classes", model.n_classes, "class vocabulary (the text condition)"),
      GATECTL_SIZE_KEY("t_embed_dim", model.t_embed_dim, "sinusoidal time embedding width"),
      GATECTL_SIZE_KEY("lora_rank", model.lora_rank, "LoRA rank (0 disables LoRA)"),
      GATECTL_BOOL_KEY("normalized_linear_attention", model.normalized_linear_attention,
                       "normalize linear attention"),
      GATECTL_BOOL_KEY("share_condition_positions", model.share_condition_positions,
                       "condition tokens reuse the latent positional embedding"),
      GATECTL_BOOL_KEY("gate_residual_stream", model.gate_residual_stream,
                       "fuse residual streams instead of branch outputs"),
      GATECTL_BOOL_KEY("gating", model.gate.enabled, "gated fusion on/off"),
      KeyOps{{"granularity", "token_wise | element_wise | direct_add"},
             [](RunConfig& c, std::string_view v) {
               c.model.gate.granularity =
                   must(parse_granularity(v), v, "token_wise|element_wise|direct_add");
             },
             [](const RunConfig& c) { return std::string(to_string(c.model.gate.granularity)); }},
      KeyOps{{"position", "after_self_attention | after_cross_attention | after_ffn"},
             [](RunConfig& c, std::string_view v) {
               c.model.gate.position = must(parse_position(v), v,
                                            "after_self_attention|after_cross_attention|after_ffn");
             },
             [](const RunConfig& c) { return std::string(to_string(c.model.gate.position)); }},
      KeyOps{{"score_source", "pre_attention | post_attention"},
             [](RunConfig& c, std::string_view v) {
               c.model.gate.score_source =
                   must(parse_score_source(v), v, "pre_attention|post_attention");
             },
             [](const RunConfig& c) { return std::string(to_string(c.model.gate.score_source)); }},
      GATECTL_BOOL_KEY("interaction", model.gate.interaction,
                       "joint self-attention over latent and condition tokens"),
  };
  return table;
}

#undef GATECTL_SIZE_KEY
#undef GATECTL_REAL_KEY
#undef GATECTL_BOOL_KEY

const KeyOps* find_key(std::string_view name) {
  for (const auto& k : key_table()) {
    if (k.key.name == name) return &k;
  }
  return nullptr;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kPretrain: return "pretrain";
    case TrainMode::kFinetune: return "finetune";
    case TrainMode::kScratch: return "scratch";
  }
  return "?";
}

RunSpec RunConfig::run_spec() const {
  RunSpec s;
  s.name = output;
  s.model = model;
  s.task = task;
  s.mode = mode;
  s.steps = steps;
  s.batch_size = batch_size;
  s.seed = seed;
  s.adam.lr = lr;
  s.adam.weight_decay = weight_decay;
  s.condition_dropout = condition_dropout;
  s.eval_interval = eval_interval;
  s.eval.samples = eval_samples;
  s.eval.sampler.steps = sample_steps;
  s.eval.sampler.guidance_scale = guidance_scale;
  s.eval.use_condition = mode != TrainMode::kPretrain;
  return s;
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    errors.emplace_back(e.what());
  }
  if (batch_size == 0) errors.emplace_back("batch_size must be >= 1");
  if (sample_steps == 0) errors.emplace_back("sample_steps must be >= 1");
  if (eval_samples == 0) errors.emplace_back("eval_samples must be >= 1");
  if (lr < 0.0) errors.emplace_back("lr must be >= 0");
  if (condition_dropout < 0.0 || condition_dropout > 1.0) {
    errors.emplace_back("condition_dropout must lie in [0, 1]");
  }
  if (mode == TrainMode::kFinetune && base_checkpoint.empty()) {
    errors.emplace_back("mode = finetune requires base_checkpoint");
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& k : key_table()) out.push_back(k.key);
    return out;
  }();
  return keys;
}

std::string flag_name(std::string_view key) {
  std::string out = "--" + std::string(key);
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const KeyOps* k = find_key(key);
  if (!k) throw std::invalid_argument("unknown key " + quote(key));
  try {
    k->set(cfg, value);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(key) + ": " + e.what());
  }
}

std::string get_config_value(const RunConfig& cfg, std::string_view key) {
  const KeyOps* k = find_key(key);
  if (!k) throw std::invalid_argument("unknown key " + quote(key));
  return k->get(cfg);
}

void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin) {
  std::vector<std::string> errors;
  std::map<std::string, std::size_t> seen;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? text.npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back(where + "expected 'key = value'");
      continue;
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh) {
      errors.push_back(where + "duplicate key " + quote(key) + " (first set on line " +
                       std::to_string(it->second) + ")");
      continue;
    }
    try {
      set_config_value(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      errors.push_back(where + e.what());
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

RunConfig parse_config_text(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  apply_config_text(cfg, text, origin);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError({path.string() + ": cannot open config file"});
  std::ostringstream os;
  os << f.rdbuf();
  return parse_config_text(os.str(), path.string());
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : key_table()) out += k.key.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace gatectl
