// SPDX-License-Identifier: Apache-2.0
//
// Personality-sentiment alignment: linear projections into a shared space,
// a temperature-scaled contrastive loss over cosine similarities, its
// similarity-weighted compound form, and the personalized regression
// constraint. All batch reductions are arithmetic means.
#pragma once

#include <cmath>
#include <string>

#include "psamf/nn.hpp"

namespace psamf {

struct AlignmentOptions {
  double tau = 0.07;
  bool symmetric = false;   // add the candidate-anchored direction (CLIP style)
  bool clamp_sim = false;   // clamp matched-pair weights to [0, 1]
};

struct AlignmentHead {
  Linear sentiment_proj;    // W_s: d_t -> d_c, no bias
  Linear personality_proj;  // W_p: d_t_p -> d_c, no bias
  Linear regression;        // W_y: d_c -> 1, no bias
  AlignmentOptions options;

  AlignmentHead() = default;
  AlignmentHead(ParameterStore& store, const std::string& prefix, Eigen::Index d_text, Eigen::Index d_personality,
                Eigen::Index d_common, const AlignmentOptions& opts, Rng& rng)
      : sentiment_proj(store, prefix + ".sentiment_proj", d_text, d_common, rng, false),
        personality_proj(store, prefix + ".personality_proj", d_personality, d_common, rng, false),
        regression(store, prefix + ".regression", d_common, 1, rng, false),
        options(opts) {
    if (!(opts.tau > 0.0)) throw ConfigError("temperature tau must be positive");
  }
};

struct Projected {
  Var sentiment;    // T_s [N x d_c]
  Var personality;  // T_p [N x d_c]
};

inline Projected project(const Var& cls_s, const Var& cls_p, const AlignmentHead& head) {
  if (cls_s.rows() != cls_p.rows()) throw ShapeError("project: batch sizes differ");
  return {head.sentiment_proj(cls_s), head.personality_proj(cls_p)};
}

// Cosine similarity matrix S[i, j] = cos(a_i, b_j). Zero rows are rejected.
inline Var cosine_similarity(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("cosine_similarity: widths differ");
  return ag::matmul(ag::l2_normalize_rows(a), ag::transpose(ag::l2_normalize_rows(b)));
}

struct InfoNceTerms {
  Var per_anchor;  // [N x 1], -log softmax of the matched pair
  Var similarity;  // [N x N]
};

// Anchors a_i against candidates b_j; the matched pair is j = i and the
// denominator runs over every j including i.
inline InfoNceTerms infonce_terms(const Var& anchors, const Var& candidates, double tau, bool symmetric = false) {
  if (anchors.rows() != candidates.rows()) throw ShapeError("contrastive loss: batch sizes differ");
  if (anchors.rows() < 2) throw InvalidArgument("contrastive loss needs at least two samples");
  if (!(tau > 0.0)) throw InvalidArgument("temperature tau must be positive");
  Var sim = cosine_similarity(anchors, candidates);
  Var logits = ag::scale(sim, 1.0 / tau);
  Var per_anchor = ag::neg(ag::diag(ag::log_softmax_rows(logits)));
  if (symmetric) {
    Var reverse = ag::neg(ag::diag(ag::log_softmax_rows(ag::transpose(logits))));
    per_anchor = ag::scale(ag::add(per_anchor, reverse), 0.5);
  }
  return {per_anchor, sim};
}

inline Var contrastive_loss(const Var& t_s, const Var& t_p, double tau, bool symmetric = false) {
  return ag::mean(infonce_terms(t_s, t_p, tau, symmetric).per_anchor);
}

struct CompoundResult {
  Var loss;
  Var diag_sims;   // [N x 1]
  Var per_anchor;  // [N x 1] contrastive terms before weighting
  Var similarity;
};

// mean_i sim(T_s^i, T_p^i) * l_i. Negative matched similarities give a
// negative term unless clamp_sim is set.
inline CompoundResult compound_contrastive_loss(const Var& t_s, const Var& t_p, const AlignmentOptions& opts) {
  auto terms = infonce_terms(t_s, t_p, opts.tau, opts.symmetric);
  Var weights = ag::diag(terms.similarity);
  if (opts.clamp_sim) weights = ag::clamp(weights, 0.0, 1.0);
  return {ag::mean(ag::mul(weights, terms.per_anchor)), weights, terms.per_anchor, terms.similarity};
}

inline CompoundResult compound_contrastive_loss(const Var& t_s, const Var& t_p, double tau) {
  AlignmentOptions opts;
  opts.tau = tau;
  return compound_contrastive_loss(t_s, t_p, opts);
}

// mean_i (1 - sim(T_s^i, T_p^i)) * |W_y T_s^i - y_i|.
inline Var personalized_constraint_loss(const Var& t_s, const Var& t_p, const Matrix& labels, const Linear& regression) {
  if (t_s.rows() != t_p.rows() || labels.rows() != t_s.rows() || labels.cols() != 1) {
    throw ShapeError("personalized constraint: batch sizes differ");
  }
  if (!labels.allFinite()) throw InvalidArgument("personalized constraint: non-finite labels");
  Var matched = ag::row_sum(ag::mul(ag::l2_normalize_rows(t_s), ag::l2_normalize_rows(t_p)));
  Var weight = ag::add_scalar(ag::neg(matched), 1.0);
  Var error = ag::abs(ag::sub(regression(t_s), Var(labels)));
  return ag::mean(ag::mul(weight, error));
}

struct AlignmentLosses {
  Var l_cl;
  Var l_ccl;
  Var l_ps;
  Var l_align;
  Matrix similarity;  // S [N x N]
};

inline AlignmentLosses alignment_loss(const Var& t_s, const Var& t_p, const Matrix& labels, const AlignmentHead& head) {
  auto compound = compound_contrastive_loss(t_s, t_p, head.options);
  AlignmentLosses out;
  out.l_cl = ag::mean(compound.per_anchor);
  out.l_ccl = compound.loss;
  out.l_ps = personalized_constraint_loss(t_s, t_p, labels, head.regression);
  out.l_align = ag::add(out.l_ccl, out.l_ps);
  out.similarity = compound.similarity.value();
  return out;
}

}  // namespace psamf
