// SPDX-License-Identifier: Apache-2.0
//
// Multi-level fusion: text-anchored cross-modal contrastive loss, pre-fusion
// through the deep slice of the text stack, pre-fusion-queried cross-modal
// attention, and the serial / parallel enhanced fusion feeding a two-layer
// prediction subnet.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "psamf/alignment.hpp"
#include "psamf/encoders.hpp"
#include "psamf/nn.hpp"

namespace psamf {

struct FusionConfig {
  Eigen::Index d_text = 64;     // d_t
  Eigen::Index d_hidden = 32;   // d_h (LSTM state width)
  Eigen::Index d_fusion = 64;   // d_f
  int heads = 4;
  Eigen::Index prefuse_in_v = 32;  // d_h, or d_v when raw features feed pre-fusion
  Eigen::Index prefuse_in_a = 32;
  bool modality_type_embeddings = true;
  bool serial_layernorm = true;
  Activation activation = Activation::kGelu;
};

struct FusionParams {
  FusionConfig cfg;
  // Cross-modal contrastive candidates: pooled h_m projected into the text width.
  Linear clm_proj_v;
  Linear clm_proj_a;
  // Pre-fusion token projections and modality-type embeddings.
  Linear prefuse_proj_v;
  Linear prefuse_proj_a;
  Var type_embedding_v;
  Var type_embedding_a;
  // Cross-modal interaction.
  Linear query_proj;  // CLS_m -> M_s
  MultiHeadAttention attend_v;
  MultiHeadAttention attend_a;
  Linear enhance_v;
  Linear enhance_a;
  Linear enhance_m;
  // Enhanced fusion.
  Linear serial_weight;  // [3 d_f -> d_f], no bias
  LayerNorm serial_norm;
  Var conv_kernel;  // [3 channels x 3 taps]
  Var conv_bias;    // [1 x 1]
  Linear subnet_hidden;
  Linear subnet_out;

  FusionParams() = default;
  FusionParams(ParameterStore& store, const std::string& prefix, const FusionConfig& c, Rng& rng) : cfg(c) {
    if (c.d_fusion < 3) throw ConfigError("fusion width d_f must be at least 3 for the parallel convolution");
    const auto dt = c.d_text, dh = c.d_hidden, df = c.d_fusion;
    clm_proj_v = Linear(store, prefix + ".clm_proj_v", dh, dt, rng);
    clm_proj_a = Linear(store, prefix + ".clm_proj_a", dh, dt, rng);
    prefuse_proj_v = Linear(store, prefix + ".prefuse_proj_v", c.prefuse_in_v, dt, rng);
    prefuse_proj_a = Linear(store, prefix + ".prefuse_proj_a", c.prefuse_in_a, dt, rng);
    type_embedding_v = store.add(prefix + ".type_embedding_v", init::normal(1, dt, 0.02, rng));
    type_embedding_a = store.add(prefix + ".type_embedding_a", init::normal(1, dt, 0.02, rng));
    query_proj = Linear(store, prefix + ".query_proj", dt, df, rng);
    attend_v = MultiHeadAttention(store, prefix + ".attend_v", df, dh, df, c.heads, false, rng);
    attend_a = MultiHeadAttention(store, prefix + ".attend_a", df, dh, df, c.heads, false, rng);
    enhance_v = Linear(store, prefix + ".enhance_v", df, df, rng);
    enhance_a = Linear(store, prefix + ".enhance_a", df, df, rng);
    enhance_m = Linear(store, prefix + ".enhance_m", df, df, rng);
    serial_weight = Linear(store, prefix + ".serial_weight", 3 * df, df, rng, false);
    serial_norm = LayerNorm(store, prefix + ".serial_norm", df);
    conv_kernel = store.add(prefix + ".conv_kernel", init::uniform(3, 3, 1.0 / 3.0, rng));
    conv_bias = store.add(prefix + ".conv_bias", Matrix::Zero(1, 1));
    subnet_hidden = Linear(store, prefix + ".subnet_hidden", 2 * df, df, rng);
    subnet_out = Linear(store, prefix + ".subnet_out", df, 1, rng);
  }
};

struct FusionState {
  Var cls_m;                    // [N x d_t]
  Var m_s, v_t, a_t;            // [N x d_f]
  Var v_enh, a_enh, m_enh;      // V'_t, A'_t, M'_s
  Var f_s;                      // [N x d_f]
  Var f_p;                      // [N x d_f]
  Var y_hat;                    // [N x 1]
  std::vector<std::vector<Matrix>> attention_v;  // per sample, per head [1 x T_valid]
  std::vector<std::vector<Matrix>> attention_a;
};

// ---------------------------------------------------------------------------
// Cross-modal contrastive loss

struct CrossModalLoss {
  Var total;
  Var visual;
  Var audio;
};

// Text CLS anchors against the (already pooled and projected) candidates of
// each modality; one InfoNCE term per modality, summed.
inline CrossModalLoss crossmodal_contrastive_loss(const Var& cls_s, const Var& candidates_v, const Var& candidates_a,
                                                  double tau) {
  CrossModalLoss out;
  out.visual = ag::mean(infonce_terms(cls_s, candidates_v, tau).per_anchor);
  out.audio = ag::mean(infonce_terms(cls_s, candidates_a, tau).per_anchor);
  out.total = ag::add(out.visual, out.audio);
  return out;
}

// Masked mean over each sample's states, projected into the text width.
inline Var pool_and_project(const std::vector<Var>& states, const Mask& mask, const Linear& proj) {
  std::vector<Var> rows;
  rows.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) rows.push_back(masked_mean(states[i], mask, static_cast<Eigen::Index>(i)));
  return proj(ag::concat_rows(rows));
}

inline CrossModalLoss crossmodal_contrastive_loss(const Var& cls_s, const std::vector<Var>& h_v, const Mask& mask_v,
                                                  const std::vector<Var>& h_a, const Mask& mask_a,
                                                  const FusionParams& params, double tau) {
  return crossmodal_contrastive_loss(cls_s, pool_and_project(h_v, mask_v, params.clm_proj_v),
                                     pool_and_project(h_a, mask_a, params.clm_proj_a), tau);
}

// ---------------------------------------------------------------------------
// Pre-fusion

// Builds [CLS_s ; P_v(x_v) + e_v ; P_a(x_a) + e_a] over valid positions for
// each sample and runs the deep layers first_deep..L. CLS_m is the first
// output row. With every visual/audio position masked the sequence is the
// CLS row alone, identical to the text-only deep forward.
inline Var prefuse(const Var& cls_s, const std::vector<Var>& x_v, const Mask& mask_v, const std::vector<Var>& x_a,
                   const Mask& mask_a, const TextEncoderStack& stack, int first_deep, const FusionParams& params) {
  const auto n = cls_s.rows();
  if (static_cast<Eigen::Index>(x_v.size()) != n || static_cast<Eigen::Index>(x_a.size()) != n) {
    throw ShapeError("prefuse: modality batch sizes differ from the text batch");
  }
  std::vector<Var> cls_rows;
  cls_rows.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Var> parts{ag::slice_rows(cls_s, i, 1)};
    auto append = [&](const Var& x, const Mask& mask, const Linear& proj, const Var& type) {
      const auto pos = valid_positions(mask, i);
      if (pos.empty()) return;
      Var tokens = proj(ag::gather_rows(x, pos));
      if (params.cfg.modality_type_embeddings) tokens = ag::add_row(tokens, type);
      parts.push_back(tokens);
    };
    append(x_v[static_cast<std::size_t>(i)], mask_v, params.prefuse_proj_v, params.type_embedding_v);
    append(x_a[static_cast<std::size_t>(i)], mask_a, params.prefuse_proj_a, params.type_embedding_a);
    Var seq = parts.size() == 1 ? parts.front() : ag::concat_rows(parts);
    if (seq.rows() > stack.config().max_positions) {
      throw SequenceTooLongError("pre-fusion sequence of " + std::to_string(seq.rows()) +
                                 " tokens exceeds the maximum of " + std::to_string(stack.config().max_positions));
    }
    Var out = stack.run_layers(seq, first_deep, stack.depth());
    cls_rows.push_back(ag::slice_rows(out, 0, 1));
  }
  return ag::concat_rows(cls_rows);
}

// ---------------------------------------------------------------------------
// Cross-modal interaction

struct CrossModalFeatures {
  Var m_s, v_t, a_t;
  Var v_enh, a_enh, m_enh;
  std::vector<std::vector<Matrix>> attention_v;
  std::vector<std::vector<Matrix>> attention_a;
};

// M_s = Linear(CLS_m) queries each modality's valid states.
inline CrossModalFeatures crossmodal_attend(const Var& cls_m, const std::vector<Var>& h_v, const Mask& mask_v,
                                            const std::vector<Var>& h_a, const Mask& mask_a,
                                            const FusionParams& params) {
  const auto n = cls_m.rows();
  if (static_cast<Eigen::Index>(h_v.size()) != n || static_cast<Eigen::Index>(h_a.size()) != n) {
    throw ShapeError("crossmodal_attend: modality batch sizes differ");
  }
  CrossModalFeatures out;
  out.m_s = params.query_proj(cls_m);
  std::vector<Var> v_rows, a_rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    Var q = ag::slice_rows(out.m_s, i, 1);
    auto attend = [&](const MultiHeadAttention& att, const Var& states, const Mask& mask, const char* name,
                      std::vector<Var>& rows, std::vector<std::vector<Matrix>>& weights) {
      const auto pos = valid_positions(mask, i);
      if (pos.empty()) {
        throw EmptyAttentionError(std::string("sample ") + std::to_string(i) + ": every " + name +
                                  " position is masked");
      }
      auto res = att(q, ag::gather_rows(states, pos));
      rows.push_back(res.output);
      weights.push_back(std::move(res.weights));
    };
    attend(params.attend_v, h_v[static_cast<std::size_t>(i)], mask_v, "visual", v_rows, out.attention_v);
    attend(params.attend_a, h_a[static_cast<std::size_t>(i)], mask_a, "audio", a_rows, out.attention_a);
  }
  out.v_t = ag::concat_rows(v_rows);
  out.a_t = ag::concat_rows(a_rows);
  out.v_enh = params.enhance_v(out.v_t);
  out.a_enh = params.enhance_a(out.a_t);
  out.m_enh = params.enhance_m(out.m_s);
  return out;
}

// ---------------------------------------------------------------------------
// Enhanced fusion and prediction

// F_s = LayerNorm(W_ser [V'_t, A'_t, M'_s]).
inline Var serial_fuse(const Var& v_enh, const Var& a_enh, const Var& m_enh, const FusionParams& params) {
  const auto df = params.cfg.d_fusion;
  if (v_enh.cols() != df || a_enh.cols() != df || m_enh.cols() != df) throw ShapeError("serial_fuse: width mismatch");
  Var mixed = params.serial_weight(ag::concat_cols({v_enh, a_enh, m_enh}));
  return params.cfg.serial_layernorm ? params.serial_norm(mixed) : mixed;
}

// Stacks (V_t, A_t, M_s) as three channels and convolves along the feature
// axis: kernel 3, stride 1, zero padding 1, one output channel.
inline Var parallel_fuse(const Var& v_t, const Var& a_t, const Var& m_s, const FusionParams& params) {
  if (v_t.cols() < 3) throw ShapeError("parallel_fuse: feature width must be at least 3");
  return ag::conv1d_same({v_t, a_t, m_s}, params.conv_kernel, params.conv_bias);
}

// Inverted dropout; a null rng or zero rate disables it.
inline Var dropout(const Var& x, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
  return ag::mul_const(x, mask);
}

// y_hat = W2 act(W1 [F_s, F_p] + b1) + b2, one unclamped value per sample.
inline Var predict(const Var& f_s, const Var& f_p, const FusionParams& params, double dropout_rate = 0.0,
                   Rng* rng = nullptr) {
  if (f_s.rows() != f_p.rows()) throw ShapeError("predict: batch sizes differ");
  Var hidden = activate(params.subnet_hidden(ag::concat_cols({f_s, f_p})), params.cfg.activation);
  return params.subnet_out(dropout(hidden, dropout_rate, rng));
}

}  // namespace psamf
