// SPDX-License-Identifier: Apache-2.0
//
// Unimodal encoders: a transformer text stack that can be run in two
// slices (shallow sentiment layers, deep pre-fusion layers), a separate
// personality text stack, and LSTM encoders for the visual and audio
// frame sequences.
//
// Every sequence is processed on its valid (unmasked) positions only, so
// padded cells never enter any arithmetic.
#pragma once

#include <string>
#include <vector>

#include "psamf/data_model.hpp"
#include "psamf/nn.hpp"

namespace psamf {

struct TextEncoderConfig {
  int vocab = 1000;
  int d_model = 64;
  int layers = 6;
  int heads = 4;
  int ffn_dim = 128;
  int max_positions = 128;
};

inline std::vector<int> valid_positions(const Mask& mask, Eigen::Index row) {
  std::vector<int> out;
  for (Eigen::Index t = 0; t < mask.cols(); ++t) {
    if (mask(row, t)) out.push_back(static_cast<int>(t));
  }
  return out;
}

class TextEncoderStack {
 public:
  TextEncoderStack() = default;
  TextEncoderStack(ParameterStore& store, const std::string& prefix, const TextEncoderConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    if (cfg.layers < 1) throw ConfigError(prefix + ": need at least one layer");
    token_embedding_ = store.add(prefix + ".token_embedding", init::normal(cfg.vocab, cfg.d_model, 0.1, rng));
    position_embedding_ =
        store.add(prefix + ".position_embedding", init::normal(cfg.max_positions, cfg.d_model, 0.1, rng));
    embedding_norm_ = LayerNorm(store, prefix + ".embedding_norm", cfg.d_model);
    for (int k = 1; k <= cfg.layers; ++k) {
      layers_.emplace_back(store, prefix + ".layer" + std::to_string(k), cfg.d_model, cfg.heads, cfg.ffn_dim, rng);
    }
  }

  const TextEncoderConfig& config() const { return cfg_; }
  int depth() const { return static_cast<int>(layers_.size()); }
  Eigen::Index width() const { return cfg_.d_model; }

  // Token + position embedding of one sequence's valid positions.
  Var embed(const std::vector<int>& ids, const std::vector<int>& positions) const {
    for (int id : ids) {
      if (id < 0 || id >= cfg_.vocab) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(cfg_.vocab));
      }
    }
    for (int p : positions) {
      if (p >= cfg_.max_positions) {
        throw SequenceTooLongError("position " + std::to_string(p) + " exceeds maximum of " +
                                   std::to_string(cfg_.max_positions));
      }
    }
    Var x = ag::add(ag::gather_rows(token_embedding_, ids), ag::gather_rows(position_embedding_, positions));
    return embedding_norm_(x);
  }

  // Runs layers first..last (1-based, inclusive). An empty range is identity.
  Var run_layers(Var x, int first, int last) const {
    if (first < 1 || last > depth()) throw InvalidArgument("run_layers: layer range out of bounds");
    for (int k = first; k <= last; ++k) x = layers_[static_cast<std::size_t>(k - 1)](x);
    return x;
  }

  Var token_embedding() const { return token_embedding_; }

 private:
  TextEncoderConfig cfg_;
  Var token_embedding_;
  Var position_embedding_;
  LayerNorm embedding_norm_;
  std::vector<TransformerLayer> layers_;
};

struct TextEncoding {
  Var cls;                     // [B x d] CLS after the last layer run
  std::vector<Var> layer_cls;  // layer_cls[k-1]: [B x d] CLS after layer k
  std::vector<Var> states;     // per sample, [T_valid x d] after the last layer run
  int layers_run = 0;
};

namespace detail {

inline void check_token_batch(const TokenMatrix& tokens, const Mask& mask) {
  if (tokens.rows() != mask.rows() || tokens.cols() != mask.cols()) {
    throw ShapeError("token matrix and mask shapes differ");
  }
  for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
    if (tokens.cols() == 0 || !mask(i, 0) || tokens(i, 0) != kClsToken) {
      throw InvalidArgument("sequence " + std::to_string(i) + " must start with a valid [CLS] token");
    }
  }
}

inline Var stack_cls(const std::vector<Var>& states) {
  std::vector<Var> rows;
  rows.reserve(states.size());
  for (const auto& s : states) rows.push_back(ag::slice_rows(s, 0, 1));
  return ag::concat_rows(rows);
}

}  // namespace detail

// Embeds and runs layers 1..layers on every sequence of the batch.
inline TextEncoding encode_text(const TextEncoderStack& stack, const TokenMatrix& tokens, const Mask& mask,
                                int layers) {
  if (layers < 1 || layers > stack.depth()) throw InvalidArgument("encode_text: layer count out of range");
  detail::check_token_batch(tokens, mask);
  TextEncoding out;
  out.states.reserve(static_cast<std::size_t>(tokens.rows()));
  for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
    const auto pos = valid_positions(mask, i);
    std::vector<int> ids;
    ids.reserve(pos.size());
    for (int p : pos) ids.push_back(tokens(i, p));
    out.states.push_back(stack.embed(ids, pos));
  }
  for (int k = 1; k <= layers; ++k) {
    for (auto& s : out.states) s = stack.run_layers(s, k, k);
    out.layer_cls.push_back(detail::stack_cls(out.states));
  }
  out.cls = out.layer_cls.back();
  out.layers_run = layers;
  return out;
}

// Continues a text-only forward from where `enc` stopped through layer `last`.
inline TextEncoding continue_text(const TextEncoderStack& stack, TextEncoding enc, int last) {
  if (last < enc.layers_run || last > stack.depth()) throw InvalidArgument("continue_text: layer out of range");
  for (int k = enc.layers_run + 1; k <= last; ++k) {
    for (auto& s : enc.states) s = stack.run_layers(s, k, k);
    enc.layer_cls.push_back(detail::stack_cls(enc.states));
  }
  enc.cls = enc.layer_cls.back();
  enc.layers_run = last;
  return enc;
}

// Shallow sentiment encoder: layers 1..split_n of the sentiment stack.
inline TextEncoding encode_sentiment_shallow(const TextEncoderStack& stack, int split_n, const TokenMatrix& tokens,
                                             const Mask& mask) {
  if (split_n < 1 || split_n >= stack.depth()) {
    throw ConfigError("split index N must satisfy 1 <= N < L (N=" + std::to_string(split_n) +
                      ", L=" + std::to_string(stack.depth()) + ")");
  }
  return encode_text(stack, tokens, mask, split_n);
}

// Independent full-depth text stack producing the personality CLS.
// Frozen by default: its parameters never require gradients.
struct PersonalityEncoder {
  TextEncoderStack stack;
  bool trainable = false;

  PersonalityEncoder() = default;
  PersonalityEncoder(ParameterStore& store, const std::string& prefix, const TextEncoderConfig& cfg,
                     bool is_trainable, Rng& rng)
      : stack(store, prefix, cfg, rng), trainable(is_trainable) {
    store.set_trainable(prefix + ".", is_trainable);
  }
};

inline Var encode_personality(const PersonalityEncoder& enc, const TokenMatrix& tokens, const Mask& mask) {
  return encode_text(enc.stack, tokens, mask, enc.stack.depth()).cls;
}

enum class Modality { kVisual, kAudio };

inline const char* modality_name(Modality m) { return m == Modality::kVisual ? "visual" : "audio"; }

struct SequenceEncoding {
  Var states;       // [T x d_h]; masked steps repeat the previous state
  Var final_state;  // [1 x d_h]
};

class SequenceEncoder {
 public:
  SequenceEncoder() = default;
  SequenceEncoder(ParameterStore& store, const std::string& prefix, Modality modality, Eigen::Index d_in,
                  Eigen::Index d_hidden, Rng& rng)
      : modality_(modality), cell_(store, prefix, d_in, d_hidden, rng) {}

  Modality modality() const { return modality_; }
  Eigen::Index input_size() const { return cell_.input_size(); }
  Eigen::Index hidden_size() const { return cell_.hidden_size(); }
  const LstmCell& cell() const { return cell_; }

  SequenceEncoding encode(const Matrix& features, const std::vector<bool>& mask) const {
    if (features.cols() != input_size()) {
      throw ShapeError(std::string(modality_name(modality_)) + " features have width " +
                       std::to_string(features.cols()) + " but the encoder expects " + std::to_string(input_size()));
    }
    if (static_cast<Eigen::Index>(mask.size()) != features.rows()) throw ShapeError("sequence mask length mismatch");
    if (!features.allFinite()) throw InvalidArgument("non-finite sequence features");
    const Eigen::Index h = hidden_size();
    const Eigen::Index steps = features.rows();
    Var projected = ag::add_row(ag::matmul(Var(features), cell_.input_weight), cell_.bias);
    Var hidden(Matrix::Zero(1, h));
    Var cell_state(Matrix::Zero(1, h));
    std::vector<Var> rows;
    rows.reserve(static_cast<std::size_t>(steps));
    for (Eigen::Index t = 0; t < steps; ++t) {
      if (mask[static_cast<std::size_t>(t)]) {
        Var gates = ag::add(ag::slice_rows(projected, t, 1), ag::matmul(hidden, cell_.hidden_weight));
        Var in_gate = ag::sigmoid(ag::slice_cols(gates, 0, h));
        Var forget_gate = ag::sigmoid(ag::slice_cols(gates, h, h));
        Var candidate = ag::tanh(ag::slice_cols(gates, 2 * h, h));
        Var out_gate = ag::sigmoid(ag::slice_cols(gates, 3 * h, h));
        cell_state = ag::add(ag::mul(forget_gate, cell_state), ag::mul(in_gate, candidate));
        hidden = ag::mul(out_gate, ag::tanh(cell_state));
      }
      rows.push_back(hidden);
    }
    return {ag::concat_rows(rows), hidden};
  }

 private:
  Modality modality_ = Modality::kVisual;
  LstmCell cell_;
};

inline std::vector<bool> mask_row(const Mask& mask, Eigen::Index row) {
  std::vector<bool> out(static_cast<std::size_t>(mask.cols()));
  for (Eigen::Index t = 0; t < mask.cols(); ++t) out[static_cast<std::size_t>(t)] = mask(row, t);
  return out;
}

// Encodes every sample of a padded modality batch.
inline std::vector<SequenceEncoding> encode_sequences(const SequenceEncoder& enc, const std::vector<Matrix>& features,
                                                      const Mask& mask) {
  if (static_cast<Eigen::Index>(features.size()) != mask.rows()) throw ShapeError("feature batch / mask mismatch");
  std::vector<SequenceEncoding> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    out.push_back(enc.encode(features[i], mask_row(mask, static_cast<Eigen::Index>(i))));
  }
  return out;
}

// Rows of `states` at valid positions.
inline Var valid_rows(const Var& states, const Mask& mask, Eigen::Index row) {
  return ag::gather_rows(states, valid_positions(mask, row));
}

// Mean over valid positions -> [1 x d].
inline Var masked_mean(const Var& states, const Mask& mask, Eigen::Index row) {
  const auto pos = valid_positions(mask, row);
  if (pos.empty()) throw EmptyAttentionError("masked_mean: every position is masked");
  return ag::mean_rows(ag::gather_rows(states, pos));
}

}  // namespace psamf
