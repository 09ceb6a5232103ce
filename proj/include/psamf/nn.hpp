// SPDX-License-Identifier: Apache-2.0
//
// Layer building blocks shared by the encoders and fusion stages: a named
// parameter registry, linear / layer-norm / attention / transformer / LSTM
// layers, and the Adam optimizer.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "psamf/autograd.hpp"
#include "psamf/errors.hpp"

namespace psamf {

using ag::Var;

// FNV-1a over raw bytes; stable across runs on one platform.
inline std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

// Ordered registry of named trainable tensors. Insertion order is the
// canonical order for checksums, serialization and optimizer state.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var var;
    bool trainable = true;
  };

  Var add(const std::string& name, Matrix init, bool trainable = true) {
    if (index_.count(name) != 0) throw InvalidArgument("duplicate parameter name: " + name);
    Var v(std::move(init), trainable);
    index_[name] = entries_.size();
    entries_.push_back({name, v, trainable});
    return v;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Var get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("unknown parameter: " + name);
    return entries_[it->second].var;
  }

  // Freezes or unfreezes every parameter whose name starts with prefix.
  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& e : entries_) {
      if (e.name.rfind(prefix, 0) == 0) {
        e.trainable = trainable;
        e.var.set_requires_grad(trainable);
      }
    }
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  std::uint64_t checksum(const std::string& prefix = "") const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& e : entries_) {
      if (e.name.rfind(prefix, 0) != 0) continue;
      h = fnv1a(e.name.data(), e.name.size(), h);
      const Matrix& m = e.var.value();
      h = fnv1a(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), h);
    }
    return h;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.var.value().size());
    return n;
  }

  std::vector<Matrix> snapshot() const {
    std::vector<Matrix> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.var.value());
    return out;
  }

  void restore(const std::vector<Matrix>& values) {
    if (values.size() != entries_.size()) throw InvalidArgument("snapshot size mismatch");
    for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i].var.mutable_value() = values[i];
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace init {

inline Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

inline Matrix xavier(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  return uniform(fan_in, fan_out, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

inline Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace init

// y = x W (+ b); W is [in x out].
struct Linear {
  Var weight;
  Var bias;  // undefined when the layer has no bias

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
         bool with_bias = true) {
    weight = store.add(name + ".weight", init::xavier(in, out, rng));
    if (with_bias) bias = store.add(name + ".bias", Matrix::Zero(1, out));
  }

  Eigen::Index in_features() const { return weight.rows(); }
  Eigen::Index out_features() const { return weight.cols(); }

  Var operator()(const Var& x) const {
    if (x.cols() != weight.rows()) {
      throw ShapeError("linear: input width " + std::to_string(x.cols()) + " but layer expects " +
                       std::to_string(weight.rows()));
    }
    Var y = ag::matmul(x, weight);
    return bias.defined() ? ag::add_row(y, bias) : y;
  }
};

struct LayerNorm {
  Var gamma;
  Var beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, Eigen::Index width) {
    gamma = store.add(name + ".gamma", Matrix::Ones(1, width));
    beta = store.add(name + ".beta", Matrix::Zero(1, width));
  }

  Var operator()(const Var& x) const { return ag::layer_norm_rows(x, gamma, beta); }
};

enum class Activation { kGelu, kRelu, kTanh };

inline Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::kGelu;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation: " + s);
}

inline Var activate(const Var& x, Activation a) {
  switch (a) {
    case Activation::kRelu:
      return ag::relu(x);
    case Activation::kTanh:
      return ag::tanh(x);
    case Activation::kGelu:
    default:
      return ag::gelu(x);
  }
}

struct AttentionOutput {
  Var output;                   // [T_q x d_model]
  std::vector<Matrix> weights;  // per head, [T_q x T_k]
};

// Scaled dot-product multi-head attention. The query may come from a
// different space than keys/values (cross attention).
struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;  // absent for bare attention
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, Eigen::Index d_query, Eigen::Index d_kv,
                     Eigen::Index d_model, int num_heads, bool output_projection, Rng& rng)
      : heads(num_heads) {
    if (num_heads <= 0 || d_model % num_heads != 0) {
      throw ConfigError(name + ": head count " + std::to_string(num_heads) + " must divide width " +
                        std::to_string(d_model));
    }
    query = Linear(store, name + ".query", d_query, d_model, rng);
    key = Linear(store, name + ".key", d_kv, d_model, rng);
    value = Linear(store, name + ".value", d_kv, d_model, rng);
    if (output_projection) output = Linear(store, name + ".output", d_model, d_model, rng);
  }

  Eigen::Index width() const { return query.out_features(); }

  AttentionOutput operator()(const Var& q_in, const Var& kv_in) const {
    if (kv_in.rows() == 0) throw EmptyAttentionError("attention over an empty key set");
    Var q = query(q_in);
    Var k = key(kv_in);
    Var v = value(kv_in);
    const Eigen::Index dh = width() / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    AttentionOutput out;
    std::vector<Var> parts;
    parts.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Var qh = ag::slice_cols(q, h * dh, dh);
      Var kh = ag::slice_cols(k, h * dh, dh);
      Var vh = ag::slice_cols(v, h * dh, dh);
      Var attn = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), scale));
      out.weights.push_back(attn.value());
      parts.push_back(ag::matmul(attn, vh));
    }
    Var merged = heads == 1 ? parts.front() : ag::concat_cols(parts);
    out.output = output.weight.defined() ? output(merged) : merged;
    return out;
  }
};

// Post-norm transformer encoder layer (BERT ordering).
struct TransformerLayer {
  MultiHeadAttention attention;
  LayerNorm attention_norm;
  Linear ffn_in;
  Linear ffn_out;
  LayerNorm ffn_norm;

  TransformerLayer() = default;
  TransformerLayer(ParameterStore& store, const std::string& name, Eigen::Index d_model, int heads,
                   Eigen::Index ffn_dim, Rng& rng)
      : attention(store, name + ".attention", d_model, d_model, d_model, heads, true, rng),
        attention_norm(store, name + ".attention_norm", d_model),
        ffn_in(store, name + ".ffn_in", d_model, ffn_dim, rng),
        ffn_out(store, name + ".ffn_out", ffn_dim, d_model, rng),
        ffn_norm(store, name + ".ffn_norm", d_model) {}

  Var operator()(const Var& x) const {
    Var h = attention_norm(ag::add(x, attention(x, x).output));
    return ffn_norm(ag::add(h, ffn_out(ag::gelu(ffn_in(h)))));
  }
};

// Single-layer unidirectional LSTM. Gate column order: input, forget, cell, output.
struct LstmCell {
  Var input_weight;   // [d_in x 4 d_h]
  Var hidden_weight;  // [d_h x 4 d_h]
  Var bias;           // [1 x 4 d_h]

  LstmCell() = default;
  LstmCell(ParameterStore& store, const std::string& name, Eigen::Index d_in, Eigen::Index d_hidden, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_hidden));
    input_weight = store.add(name + ".input_weight", init::uniform(d_in, 4 * d_hidden, bound, rng));
    hidden_weight = store.add(name + ".hidden_weight", init::uniform(d_hidden, 4 * d_hidden, bound, rng));
    bias = store.add(name + ".bias", Matrix::Zero(1, 4 * d_hidden));
  }

  Eigen::Index input_size() const { return input_weight.rows(); }
  Eigen::Index hidden_size() const { return hidden_weight.rows(); }
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(ParameterStore& store, AdamOptions opts) : store_(store), opts_(opts) {
    for (const auto& e : store_.entries()) {
      first_.push_back(Matrix::Zero(e.var.rows(), e.var.cols()));
      second_.push_back(Matrix::Zero(e.var.rows(), e.var.cols()));
    }
  }

  // Frozen parameters are skipped entirely, so their bytes never change.
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const auto& entries = store_.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (!e.trainable || !e.var.has_grad()) continue;
      Var v = e.var;
      Matrix g = v.grad();
      if (opts_.weight_decay != 0.0) g += opts_.weight_decay * v.value();
      first_[i] = opts_.beta1 * first_[i] + (1.0 - opts_.beta1) * g;
      second_[i] = opts_.beta2 * second_[i] + (1.0 - opts_.beta2) * g.cwiseProduct(g);
      if (opts_.lr == 0.0) continue;
      Matrix update = ((first_[i].array() / c1) / ((second_[i].array() / c2).sqrt() + opts_.eps)).matrix();
      v.mutable_value() -= opts_.lr * update;
    }
  }

  long steps() const { return t_; }

 private:
  ParameterStore& store_;
  AdamOptions opts_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  long t_ = 0;
};

}  // namespace psamf
