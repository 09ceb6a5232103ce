// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: JSON is the single config format. Unknown keys are
// errors, and `key.path=value` overrides address the same tree.
#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "psamf/errors.hpp"
#include "psamf/nn.hpp"

namespace psamf {

struct ModelConfig {
  int d_t = 64;
  int d_t_p = 64;
  int d_c = 32;
  int d_f = 64;
  int d_h = 32;
  int heads = 4;
  int layers = 6;  // L
  int split = 4;   // N: layers 1..N shallow, N+1..L pre-fusion
  int personality_layers = 6;
  int ffn_dim = 128;
  int max_positions = 128;
  std::string activation = "gelu";
  double dropout = 0.1;
  bool personality_trainable = false;
  std::string prefusion_input = "lstm";  // "lstm" (h_m) or "raw" (X_m)
  bool modality_type_embeddings = true;
  bool serial_layernorm = true;
};

struct LossConfig {
  double tau = 0.07;
  bool symmetric = false;
  bool clamp_sim = false;
  bool use_align_ps = true;
  bool use_clm = true;
  bool use_personality = true;
  bool use_prefusion = true;
  bool use_enhanced_fusion = true;
  // 1..L: layer-k text CLS; L+1: pooled visual+audio; L+2: CLS_m. 0 means L.
  int alignment_layer = 0;
};

struct DataConfig {
  std::string archive;  // empty: synthetic
  std::uint64_t synthetic_seed = 42;
  int synthetic_n = 64;
  int d_v = 35;
  int d_a = 74;
  int vocab = 1000;
  int max_text = 64;
  int max_visual = 64;
  int max_audio = 64;
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  DataConfig data;
  double lr = 1e-4;
  double weight_decay = 0.0;
  int batch_size = 8;
  int epochs = 30;
  int steps = 0;  // > 0: stop after exactly this many optimizer steps
  std::uint64_t seed = 1;
  std::string selection = "mae";  // "mae" or "acc2"
  std::string output_dir;

  int resolved_alignment_layer() const { return loss.alignment_layer == 0 ? model.layers : loss.alignment_layer; }
};

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
  j = {{"d_t", m.d_t},
       {"d_t_p", m.d_t_p},
       {"d_c", m.d_c},
       {"d_f", m.d_f},
       {"d_h", m.d_h},
       {"heads", m.heads},
       {"layers", m.layers},
       {"split", m.split},
       {"personality_layers", m.personality_layers},
       {"ffn_dim", m.ffn_dim},
       {"max_positions", m.max_positions},
       {"activation", m.activation},
       {"dropout", m.dropout},
       {"personality_trainable", m.personality_trainable},
       {"prefusion_input", m.prefusion_input},
       {"modality_type_embeddings", m.modality_type_embeddings},
       {"serial_layernorm", m.serial_layernorm}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& m) {
  j.at("d_t").get_to(m.d_t);
  j.at("d_t_p").get_to(m.d_t_p);
  j.at("d_c").get_to(m.d_c);
  j.at("d_f").get_to(m.d_f);
  j.at("d_h").get_to(m.d_h);
  j.at("heads").get_to(m.heads);
  j.at("layers").get_to(m.layers);
  j.at("split").get_to(m.split);
  j.at("personality_layers").get_to(m.personality_layers);
  j.at("ffn_dim").get_to(m.ffn_dim);
  j.at("max_positions").get_to(m.max_positions);
  j.at("activation").get_to(m.activation);
  j.at("dropout").get_to(m.dropout);
  j.at("personality_trainable").get_to(m.personality_trainable);
  j.at("prefusion_input").get_to(m.prefusion_input);
  j.at("modality_type_embeddings").get_to(m.modality_type_embeddings);
  j.at("serial_layernorm").get_to(m.serial_layernorm);
}

inline void to_json(nlohmann::json& j, const LossConfig& l) {
  j = {{"tau", l.tau},
       {"symmetric", l.symmetric},
       {"clamp_sim", l.clamp_sim},
       {"use_align_ps", l.use_align_ps},
       {"use_clm", l.use_clm},
       {"use_personality", l.use_personality},
       {"use_prefusion", l.use_prefusion},
       {"use_enhanced_fusion", l.use_enhanced_fusion},
       {"alignment_layer", l.alignment_layer}};
}

inline void from_json(const nlohmann::json& j, LossConfig& l) {
  j.at("tau").get_to(l.tau);
  j.at("symmetric").get_to(l.symmetric);
  j.at("clamp_sim").get_to(l.clamp_sim);
  j.at("use_align_ps").get_to(l.use_align_ps);
  j.at("use_clm").get_to(l.use_clm);
  j.at("use_personality").get_to(l.use_personality);
  j.at("use_prefusion").get_to(l.use_prefusion);
  j.at("use_enhanced_fusion").get_to(l.use_enhanced_fusion);
  j.at("alignment_layer").get_to(l.alignment_layer);
}

inline void to_json(nlohmann::json& j, const DataConfig& d) {
  j = {{"archive", d.archive},       {"synthetic_seed", d.synthetic_seed}, {"synthetic_n", d.synthetic_n},
       {"d_v", d.d_v},               {"d_a", d.d_a},                       {"vocab", d.vocab},
       {"max_text", d.max_text},     {"max_visual", d.max_visual},         {"max_audio", d.max_audio}};
}

inline void from_json(const nlohmann::json& j, DataConfig& d) {
  j.at("archive").get_to(d.archive);
  j.at("synthetic_seed").get_to(d.synthetic_seed);
  j.at("synthetic_n").get_to(d.synthetic_n);
  j.at("d_v").get_to(d.d_v);
  j.at("d_a").get_to(d.d_a);
  j.at("vocab").get_to(d.vocab);
  j.at("max_text").get_to(d.max_text);
  j.at("max_visual").get_to(d.max_visual);
  j.at("max_audio").get_to(d.max_audio);
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"model", c.model},
       {"loss", c.loss},
       {"data", c.data},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"steps", c.steps},
       {"seed", c.seed},
       {"selection", c.selection},
       {"output_dir", c.output_dir}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  j.at("model").get_to(c.model);
  j.at("loss").get_to(c.loss);
  j.at("data").get_to(c.data);
  j.at("lr").get_to(c.lr);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("batch_size").get_to(c.batch_size);
  j.at("epochs").get_to(c.epochs);
  j.at("steps").get_to(c.steps);
  j.at("seed").get_to(c.seed);
  j.at("selection").get_to(c.selection);
  j.at("output_dir").get_to(c.output_dir);
}

namespace detail {

// Overlays `patch` onto `base`; every key must already exist in `base`
// with a compatible JSON type.
inline void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config" + (path.empty() ? "" : " at '" + path + "'") + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    auto& slot = base[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), key);
      continue;
    }
    const auto& v = it.value();
    const bool ok = (slot.is_number() && v.is_number()) || (slot.is_boolean() && v.is_boolean()) ||
                    (slot.is_string() && v.is_string());
    if (!ok) throw ConfigError("config key '" + key + "' has the wrong type");
    if (slot.is_number_integer() || slot.is_number_unsigned()) {
      if (!v.is_number_integer() && !v.is_number_unsigned()) {
        throw ConfigError("config key '" + key + "' expects an integer");
      }
    }
    slot = slot.is_number_float() ? nlohmann::json(v.get<double>()) : v;
  }
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  const auto& m = c.model;
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (m.layers < 2) fail("model.layers must be >= 2");
  if (m.split < 1 || m.split >= m.layers) fail("model.split must satisfy 1 <= N < L");
  if (m.personality_layers < 1) fail("model.personality_layers must be >= 1");
  if (m.d_t <= 0 || m.d_t_p <= 0 || m.d_c <= 0 || m.d_h <= 0 || m.ffn_dim <= 0) fail("model dims must be positive");
  if (m.d_f < 3) fail("model.d_f must be >= 3");
  if (m.heads <= 0 || m.d_t % m.heads != 0 || m.d_t_p % m.heads != 0 || m.d_f % m.heads != 0) {
    fail("model.heads must divide d_t, d_t_p and d_f");
  }
  if (m.max_positions < 2) fail("model.max_positions must be >= 2");
  if (m.dropout < 0.0 || m.dropout >= 1.0) fail("model.dropout must be in [0, 1)");
  if (m.prefusion_input != "lstm" && m.prefusion_input != "raw") fail("model.prefusion_input must be lstm or raw");
  parse_activation(m.activation);
  if (!(c.loss.tau > 0.0)) fail("loss.tau must be positive");
  if (c.loss.alignment_layer < 0 || c.loss.alignment_layer > m.layers + 2) {
    fail("loss.alignment_layer must be in 0..L+2");
  }
  if (!(c.lr >= 0.0)) fail("lr must be non-negative");
  if (c.weight_decay < 0.0) fail("weight_decay must be non-negative");
  if (c.batch_size < 2) fail("batch_size must be >= 2");
  if (c.epochs < 1 && c.steps < 1) fail("need epochs >= 1 or steps >= 1");
  if (c.steps < 0) fail("steps must be non-negative");
  if (c.selection != "mae" && c.selection != "acc2") fail("selection must be mae or acc2");
  if (c.data.archive.empty() && c.data.synthetic_n < 4) fail("data.synthetic_n must be >= 4");
}

inline RunConfig config_from_json(const nlohmann::json& patch) {
  nlohmann::json base = RunConfig{};
  detail::merge_strict(base, patch, "");
  RunConfig c = base.get<RunConfig>();
  validate(c);
  return c;
}

// Parses the value as JSON when possible (numbers, booleans, quoted
// strings), otherwise takes it as a bare string.
inline void apply_override(nlohmann::json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  nlohmann::json patch = value;
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = nlohmann::json{{*it, patch}};
  detail::merge_strict(cfg, patch, "");
}

inline RunConfig resolve_config(const nlohmann::json& file_patch, const std::vector<std::string>& overrides) {
  nlohmann::json base = RunConfig{};
  detail::merge_strict(base, file_patch, "");
  for (const auto& o : overrides) apply_override(base, o);
  RunConfig c = base.get<RunConfig>();
  validate(c);
  return c;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("file not found: " + path.string());
  std::ifstream in(path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("cannot parse JSON in " + path.string());
  return j;
}

// Resolved config with the default alignment layer made explicit. This is
// the persisted form and the input to the config hash.
inline nlohmann::json resolved_json(const RunConfig& c) {
  RunConfig r = c;
  r.loss.alignment_layer = c.resolved_alignment_layer();
  return r;
}

inline std::string config_hash(const RunConfig& c) {
  nlohmann::json j = resolved_json(c);
  j.erase("output_dir");
  const std::string s = j.dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(s.data(), s.size())));
  return buf;
}

}  // namespace psamf
