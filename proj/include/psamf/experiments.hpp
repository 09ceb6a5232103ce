// SPDX-License-Identifier: Apache-2.0
//
// The full model, the training coordinator, and the two experiment
// harnesses: the five-way ablation and the alignment-layer sweep.
#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "psamf/alignment.hpp"
#include "psamf/data_model.hpp"
#include "psamf/encoders.hpp"
#include "psamf/fusion.hpp"
#include "psamf/metrics.hpp"
#include "psamf/nn.hpp"
#include "psamf/run_config.hpp"
#include "psamf/weights.hpp"

namespace psamf {

// ---------------------------------------------------------------------------
// Total loss

struct LossToggles {
  bool align = true;  // personality branch present (ccl + ps)
  bool ps = true;
  bool clm = true;
};

struct LossComponents {
  double l_ccl = 0.0;
  double l_ps = 0.0;
  double l_clm = 0.0;
  double l_task = 0.0;
  double l_total = 0.0;

  bool operator==(const LossComponents&) const = default;
};

// L_total = L_align + L_clm + L_task with disabled terms contributing
// exactly zero. Summation order is fixed: ((align) + clm) + task.
inline double total_loss(double l_align, double l_clm, double l_task, const LossToggles& t = {}) {
  const double align = t.align ? l_align : 0.0;
  const double clm = t.clm ? l_clm : 0.0;
  return (align + clm) + l_task;
}

inline double total_loss(const LossComponents& c) { return ((c.l_ccl + c.l_ps) + c.l_clm) + c.l_task; }

// ---------------------------------------------------------------------------
// Model

struct ForwardOptions {
  bool compute_losses = true;
  Rng* dropout_rng = nullptr;  // null: evaluation mode
};

struct ForwardResult {
  FusionState fusion;
  Var cls_s;
  Var l_ccl, l_ps, l_clm, l_task, l_total;
  Matrix alignment_similarity;

  LossComponents components() const {
    return {l_ccl.item(), l_ps.item(), l_clm.item(), l_task.item(), l_total.item()};
  }
};

inline Rng component_rng(std::uint64_t seed, std::uint64_t component) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(component)};
  return Rng(seq);
}

class PsaMfModel {
 public:
  PsaMfModel(const RunConfig& cfg, const ArchiveManifest& dims) : cfg_(cfg) {
    validate(cfg);
    const auto& m = cfg.model;
    const std::uint64_t seed = cfg.seed;

    TextEncoderConfig text_cfg{dims.vocab, m.d_t, m.layers, m.heads, m.ffn_dim, m.max_positions};
    auto rng_text = component_rng(seed, 1);
    text_ = TextEncoderStack(store_, "text", text_cfg, rng_text);

    TextEncoderConfig pers_cfg{dims.vocab, m.d_t_p, m.personality_layers, m.heads, m.ffn_dim, m.max_positions};
    auto rng_pers = component_rng(seed, 2);
    personality_ = PersonalityEncoder(store_, "personality", pers_cfg, m.personality_trainable, rng_pers);

    auto rng_seq = component_rng(seed, 3);
    lstm_v_ = SequenceEncoder(store_, "lstm_v", Modality::kVisual, dims.d_v, m.d_h, rng_seq);
    lstm_a_ = SequenceEncoder(store_, "lstm_a", Modality::kAudio, dims.d_a, m.d_h, rng_seq);

    AlignmentOptions align_opts{cfg.loss.tau, cfg.loss.symmetric, cfg.loss.clamp_sim};
    auto rng_align = component_rng(seed, 4);
    align_ = AlignmentHead(store_, "align", m.d_t, m.d_t_p, m.d_c, align_opts, rng_align);
    va_proj_ = Linear(store_, "align.va_proj", 2 * m.d_h, m.d_t, rng_align);

    FusionConfig fcfg;
    fcfg.d_text = m.d_t;
    fcfg.d_hidden = m.d_h;
    fcfg.d_fusion = m.d_f;
    fcfg.heads = m.heads;
    fcfg.prefuse_in_v = m.prefusion_input == "raw" ? dims.d_v : m.d_h;
    fcfg.prefuse_in_a = m.prefusion_input == "raw" ? dims.d_a : m.d_h;
    fcfg.modality_type_embeddings = m.modality_type_embeddings;
    fcfg.serial_layernorm = m.serial_layernorm;
    fcfg.activation = parse_activation(m.activation);
    auto rng_fusion = component_rng(seed, 5);
    fusion_ = FusionParams(store_, "fusion", fcfg, rng_fusion);

    auto rng_ablation = component_rng(seed, 6);
    bf_proj_ = Linear(store_, "ablation.bf_proj", m.d_t + 2 * m.d_h, m.d_t, rng_ablation);
    ef_head_ = Linear(store_, "ablation.ef_head", 3 * m.d_f, 1, rng_ablation);
  }

  PsaMfModel(const PsaMfModel&) = delete;
  PsaMfModel& operator=(const PsaMfModel&) = delete;

  const RunConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const TextEncoderStack& text() const { return text_; }
  const PersonalityEncoder& personality() const { return personality_; }
  const SequenceEncoder& visual_encoder() const { return lstm_v_; }
  const SequenceEncoder& audio_encoder() const { return lstm_a_; }
  const AlignmentHead& alignment_head() const { return align_; }
  const FusionParams& fusion() const { return fusion_; }

  ForwardResult forward(const Batch& batch, const ForwardOptions& opts = {}) const {
    const auto& m = cfg_.model;
    const auto& loss = cfg_.loss;
    const int split = m.split;
    ForwardResult out;

    auto shallow = encode_sentiment_shallow(text_, split, batch.tokens, batch.token_mask);
    out.cls_s = shallow.cls;
    auto enc_v = encode_sequences(lstm_v_, batch.visual, batch.visual_mask);
    auto enc_a = encode_sequences(lstm_a_, batch.audio, batch.audio_mask);
    std::vector<Var> h_v, h_a;
    for (auto& e : enc_v) h_v.push_back(e.states);
    for (auto& e : enc_a) h_a.push_back(e.states);

    auto pooled = [&](const std::vector<Var>& h, const Mask& mask) {
      std::vector<Var> rows;
      for (std::size_t i = 0; i < h.size(); ++i) rows.push_back(masked_mean(h[i], mask, static_cast<Eigen::Index>(i)));
      return ag::concat_rows(rows);
    };

    auto& fs = out.fusion;
    if (loss.use_prefusion) {
      std::vector<Var> x_v = h_v, x_a = h_a;
      if (m.prefusion_input == "raw") {
        x_v.clear();
        x_a.clear();
        for (const auto& f : batch.visual) x_v.emplace_back(f);
        for (const auto& f : batch.audio) x_a.emplace_back(f);
      }
      fs.cls_m = prefuse(shallow.cls, x_v, batch.visual_mask, x_a, batch.audio_mask, text_, split + 1, fusion_);
    } else {
      fs.cls_m = bf_proj_(
          ag::concat_cols({shallow.cls, pooled(h_v, batch.visual_mask), pooled(h_a, batch.audio_mask)}));
    }

    auto cross = crossmodal_attend(fs.cls_m, h_v, batch.visual_mask, h_a, batch.audio_mask, fusion_);
    fs.m_s = cross.m_s;
    fs.v_t = cross.v_t;
    fs.a_t = cross.a_t;
    fs.v_enh = cross.v_enh;
    fs.a_enh = cross.a_enh;
    fs.m_enh = cross.m_enh;
    fs.attention_v = std::move(cross.attention_v);
    fs.attention_a = std::move(cross.attention_a);

    if (loss.use_enhanced_fusion) {
      fs.f_s = serial_fuse(fs.v_enh, fs.a_enh, fs.m_enh, fusion_);
      fs.f_p = parallel_fuse(fs.v_t, fs.a_t, fs.m_s, fusion_);
      fs.y_hat = predict(fs.f_s, fs.f_p, fusion_, m.dropout, opts.dropout_rng);
    } else {
      fs.y_hat = ef_head_(ag::concat_cols({fs.v_t, fs.a_t, fs.m_s}));
    }

    if (!opts.compute_losses) return out;

    const Var zero = Var::scalar(0.0);
    out.l_task = ag::mean(ag::abs(ag::sub(fs.y_hat, Var(batch.labels))));

    out.l_clm = zero;
    if (loss.use_clm) {
      out.l_clm = crossmodal_contrastive_loss(shallow.cls, h_v, batch.visual_mask, h_a, batch.audio_mask, fusion_,
                                              loss.tau)
                      .total;
    }

    out.l_ccl = zero;
    out.l_ps = zero;
    if (loss.use_personality) {
      Var cls_p = encode_personality(personality_, batch.tokens, batch.token_mask);
      const int k = cfg_.resolved_alignment_layer();
      Var source;
      if (k <= split) {
        source = shallow.layer_cls[static_cast<std::size_t>(k - 1)];
      } else if (k <= m.layers) {
        source = continue_text(text_, shallow, k).cls;
      } else if (k == m.layers + 1) {
        source = va_proj_(ag::concat_cols({pooled(h_v, batch.visual_mask), pooled(h_a, batch.audio_mask)}));
      } else {
        source = fs.cls_m;
      }
      auto projected = project(source, cls_p, align_);
      auto compound = compound_contrastive_loss(projected.sentiment, projected.personality, align_.options);
      out.l_ccl = compound.loss;
      out.alignment_similarity = compound.similarity.value();
      if (loss.use_align_ps) {
        out.l_ps =
            personalized_constraint_loss(projected.sentiment, projected.personality, batch.labels, align_.regression);
      }
    }

    out.l_total = ag::add(ag::add(ag::add(out.l_ccl, out.l_ps), out.l_clm), out.l_task);
    return out;
  }

  // Predictions for every sample of a split, in archive order.
  std::vector<double> predict_split(const FeatureArchive& archive, const std::string& split,
                                    std::vector<double>* labels = nullptr) const {
    ag::NoGradGuard no_grad;
    BatchOptions bo;
    bo.shuffle = false;
    bo.min_batch = 1;
    bo.limits = limits();
    std::vector<double> preds;
    for (const auto& b : make_batches(archive, split, static_cast<std::size_t>(cfg_.batch_size), 0, bo)) {
      ForwardOptions fo;
      fo.compute_losses = false;
      auto r = forward(b, fo);
      for (Eigen::Index i = 0; i < r.fusion.y_hat.rows(); ++i) {
        preds.push_back(r.fusion.y_hat.value()(i, 0));
        if (labels) labels->push_back(b.labels(i, 0));
      }
    }
    return preds;
  }

  EvalReport evaluate_split(const FeatureArchive& archive, const std::string& split) const {
    std::vector<double> labels;
    auto preds = predict_split(archive, split, &labels);
    return evaluate(preds, labels);
  }

  SequenceLimits limits() const { return {cfg_.data.max_text, cfg_.data.max_visual, cfg_.data.max_audio}; }

 private:
  RunConfig cfg_;
  ParameterStore store_;
  TextEncoderStack text_;
  PersonalityEncoder personality_;
  SequenceEncoder lstm_v_;
  SequenceEncoder lstm_a_;
  AlignmentHead align_;
  Linear va_proj_;
  FusionParams fusion_;
  Linear bf_proj_;
  Linear ef_head_;
};

// ---------------------------------------------------------------------------
// Run records

struct EpochRecord {
  int epoch = 0;
  int steps = 0;                // optimizer steps taken in this epoch
  LossComponents step_mean;     // mean over this epoch's step losses
  LossComponents objective;     // full train objective after the epoch (fixed batching, no dropout)
  EvalReport valid;

  bool operator==(const EpochRecord& o) const {
    return epoch == o.epoch && steps == o.steps && step_mean == o.step_mean && objective == o.objective &&
           report_to_json(valid) == report_to_json(o.valid);
  }
};

struct RunRecord {
  std::string variant = "full";
  nlohmann::json config;  // resolved
  std::string config_hash;
  std::vector<LossComponents> steps;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  EvalReport best_valid;
  EvalReport test;         // best-epoch parameters
  EvalReport final_train;  // parameters after the last step
  std::uint64_t personality_checksum_before = 0;
  std::uint64_t personality_checksum_after = 0;
  std::uint64_t final_checksum = 0;
  double wall_seconds = 0.0;
};

// Equality on everything except the variant label and wall-clock time.
inline bool same_results(const RunRecord& a, const RunRecord& b) {
  return a.config == b.config && a.config_hash == b.config_hash && a.steps == b.steps &&
         a.epochs == b.epochs && a.best_epoch == b.best_epoch &&
         report_to_json(a.best_valid) == report_to_json(b.best_valid) &&
         report_to_json(a.test) == report_to_json(b.test) &&
         report_to_json(a.final_train) == report_to_json(b.final_train) &&
         a.personality_checksum_before == b.personality_checksum_before &&
         a.personality_checksum_after == b.personality_checksum_after && a.final_checksum == b.final_checksum;
}

inline nlohmann::json components_json(const LossComponents& c) {
  return {{"l_ccl", c.l_ccl}, {"l_ps", c.l_ps}, {"l_clm", c.l_clm}, {"l_task", c.l_task}, {"l_total", c.l_total}};
}

inline nlohmann::json record_to_json(const RunRecord& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : r.steps) steps.push_back(components_json(s));
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"steps", e.steps},
                      {"step_mean", components_json(e.step_mean)},
                      {"objective", components_json(e.objective)},
                      {"valid", report_to_json(e.valid)}});
  }
  char ck[3][17];
  std::snprintf(ck[0], 17, "%016llx", static_cast<unsigned long long>(r.personality_checksum_before));
  std::snprintf(ck[1], 17, "%016llx", static_cast<unsigned long long>(r.personality_checksum_after));
  std::snprintf(ck[2], 17, "%016llx", static_cast<unsigned long long>(r.final_checksum));
  return {{"variant", r.variant},
          {"config", r.config},
          {"config_hash", r.config_hash},
          {"steps", steps},
          {"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"best_valid", report_to_json(r.best_valid)},
          {"test", report_to_json(r.test)},
          {"final_train", report_to_json(r.final_train)},
          {"personality_checksum_before", ck[0]},
          {"personality_checksum_after", ck[1]},
          {"final_checksum", ck[2]},
          {"wall_seconds", r.wall_seconds}};
}

inline std::string loss_curve_csv(const RunRecord& r) {
  std::string out = "epoch,l_ccl,l_ps,l_clm,l_task,l_total\n";
  char buf[256];
  for (const auto& e : r.epochs) {
    const auto& o = e.objective;
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, o.l_ccl, o.l_ps, o.l_clm, o.l_task,
                  o.l_total);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

inline FeatureArchive load_data(const RunConfig& cfg) {
  if (!cfg.data.archive.empty()) return load_archive(cfg.data.archive);
  SyntheticDims dims;
  dims.d_v = cfg.data.d_v;
  dims.d_a = cfg.data.d_a;
  dims.vocab = cfg.data.vocab;
  return generate_synthetic(cfg.data.synthetic_seed, cfg.data.synthetic_n, dims);
}

namespace detail {

inline void check_finite(const LossComponents& c) {
  const std::pair<const char*, double> named[] = {
      {"l_ccl", c.l_ccl}, {"l_ps", c.l_ps}, {"l_clm", c.l_clm}, {"l_task", c.l_task}, {"l_total", c.l_total}};
  for (const auto& [name, v] : named) {
    if (!std::isfinite(v)) throw NonFiniteLossError(std::string("non-finite loss component ") + name);
  }
}

inline LossComponents mean_components(const std::vector<LossComponents>& xs) {
  LossComponents m;
  if (xs.empty()) return m;
  for (const auto& x : xs) {
    m.l_ccl += x.l_ccl;
    m.l_ps += x.l_ps;
    m.l_clm += x.l_clm;
    m.l_task += x.l_task;
    m.l_total += x.l_total;
  }
  const double n = static_cast<double>(xs.size());
  m.l_ccl /= n;
  m.l_ps /= n;
  m.l_clm /= n;
  m.l_task /= n;
  m.l_total /= n;
  return m;
}

inline std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) + 1;
}

}  // namespace detail

// Train objective over the whole split with a fixed batching and no dropout.
inline LossComponents train_objective(const PsaMfModel& model, const FeatureArchive& archive) {
  ag::NoGradGuard no_grad;
  BatchOptions bo;
  bo.shuffle = false;
  bo.limits = model.limits();
  std::vector<LossComponents> parts;
  for (const auto& b : make_batches(archive, "train", static_cast<std::size_t>(model.config().batch_size), 0, bo)) {
    parts.push_back(model.forward(b).components());
  }
  return detail::mean_components(parts);
}

// Hook called after every optimizer step (tests use it to probe state).
using StepHook = std::function<void(const PsaMfModel&, const LossComponents&, long step)>;

inline bool better(const RunConfig& cfg, const EvalReport& candidate, const std::optional<EvalReport>& best) {
  if (!best) return true;
  if (cfg.selection == "acc2") {
    return candidate.acc2_excl_zero.value_or(candidate.acc2_incl_zero) >
           best->acc2_excl_zero.value_or(best->acc2_incl_zero);
  }
  return candidate.mae < best->mae;
}

inline RunRecord train(const RunConfig& cfg, const FeatureArchive& archive, const std::string& variant = "full",
                       const StepHook& hook = {}, PsaMfModel** out_model = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(cfg);
  RunRecord rec;
  rec.variant = variant;
  rec.config = resolved_json(cfg);
  rec.config_hash = config_hash(cfg);

  auto model = std::make_unique<PsaMfModel>(cfg, archive.manifest);
  auto& store = model->parameters();
  AdamOptions ao;
  ao.lr = cfg.lr;
  ao.weight_decay = cfg.weight_decay;
  Adam optimizer(store, ao);
  Rng dropout_rng = component_rng(cfg.seed, 100);
  rec.personality_checksum_before = store.checksum("personality.");

  BatchOptions bo;
  bo.limits = model->limits();
  const long max_steps = cfg.steps > 0 ? cfg.steps : std::numeric_limits<long>::max();
  const int max_epochs = cfg.steps > 0 ? std::numeric_limits<int>::max() : cfg.epochs;
  std::optional<EvalReport> best;
  std::vector<Matrix> best_params;
  long step = 0;

  for (int epoch = 1; epoch <= max_epochs && step < max_steps; ++epoch) {
    auto batches = make_batches(archive, "train", static_cast<std::size_t>(cfg.batch_size),
                                detail::epoch_seed(cfg.seed, epoch), bo);
    if (batches.empty()) throw EmptySplitError("train split yields no batch of at least two samples");
    std::vector<LossComponents> epoch_steps;
    for (const auto& batch : batches) {
      if (step >= max_steps) break;
      store.zero_grad();
      ForwardOptions fo;
      fo.dropout_rng = &dropout_rng;
      auto fwd = model->forward(batch, fo);
      auto comps = fwd.components();
      detail::check_finite(comps);
      if (std::abs(total_loss(comps) - comps.l_total) > 1e-9) {
        throw NonFiniteLossError("loss decomposition mismatch at step " + std::to_string(step + 1));
      }
      fwd.l_total.backward();
      optimizer.step();
      ++step;
      rec.steps.push_back(comps);
      epoch_steps.push_back(comps);
      if (hook) hook(*model, comps, step);
    }
    EpochRecord er;
    er.epoch = epoch;
    er.steps = static_cast<int>(epoch_steps.size());
    er.step_mean = detail::mean_components(epoch_steps);
    er.objective = train_objective(*model, archive);
    detail::check_finite(er.objective);
    er.valid = model->evaluate_split(archive, "valid");
    if (better(cfg, er.valid, best)) {
      best = er.valid;
      best_params = store.snapshot();
      rec.best_epoch = epoch;
    }
    rec.epochs.push_back(std::move(er));
  }

  rec.final_train = model->evaluate_split(archive, "train");
  rec.personality_checksum_after = store.checksum("personality.");
  rec.final_checksum = store.checksum();
  if (!best_params.empty()) store.restore(best_params);
  rec.best_valid = *best;
  rec.test = model->evaluate_split(archive, "test");
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out_model) *out_model = model.release();
  return rec;
}

// Persists a run beside its fully resolved config.
inline void write_run_outputs(const std::filesystem::path& dir, const RunRecord& rec,
                              const PsaMfModel* model = nullptr) {
  std::filesystem::create_directories(dir);
  write_text_atomic(dir / "config.json", rec.config.dump(2) + "\n");
  write_text_atomic(dir / "run_record.json", record_to_json(rec).dump(2) + "\n");
  write_text_atomic(dir / "loss_curve.csv", loss_curve_csv(rec));
  if (model) save_weights(model->parameters(), dir / "weights.jsonl");
}

// ---------------------------------------------------------------------------
// Harnesses

struct Variant {
  std::string name;
  RunConfig config;
};

// Full model plus the five single-component removals, all sharing seed,
// data and base config.
inline std::vector<Variant> ablation_variants(const RunConfig& base) {
  std::vector<Variant> out;
  out.push_back({"full", base});
  auto with = [&](const char* name, auto edit) {
    RunConfig c = base;
    edit(c.loss);
    out.push_back({name, c});
  };
  with("w/o-PF", [](LossConfig& l) { l.use_personality = false; });
  with("w/o-BF", [](LossConfig& l) { l.use_prefusion = false; });
  with("w/o-EF", [](LossConfig& l) { l.use_enhanced_fusion = false; });
  with("w/o-Lps", [](LossConfig& l) { l.use_align_ps = false; });
  with("w/o-Lclm", [](LossConfig& l) { l.use_clm = false; });
  return out;
}

// Runs independent variants on up to `jobs` threads; results keep input order.
inline std::vector<RunRecord> run_variants(const std::vector<Variant>& variants, const FeatureArchive& archive,
                                           int jobs = 1) {
  std::vector<RunRecord> out(variants.size());
  std::vector<std::exception_ptr> errors(variants.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= variants.size()) return;
        i = next++;
      }
      try {
        out[i] = train(variants[i].config, archive, variants[i].name);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(variants.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

inline std::vector<RunRecord> ablate(const RunConfig& base, const FeatureArchive& archive, int jobs = 1) {
  return run_variants(ablation_variants(base), archive, jobs);
}

inline std::string ablation_csv(const std::vector<RunRecord>& runs) {
  std::string out = "variant," + report_csv_header() + ",train_mae\n";
  for (const auto& r : runs) {
    out += r.variant + "," + report_csv_row(r.test) + "," + format_metric(r.final_train.mae) + "\n";
  }
  return out;
}

// k = 1..L+2; see LossConfig::alignment_layer for the meaning of k.
inline std::vector<Variant> sweep_variants(const RunConfig& base) {
  std::vector<Variant> out;
  for (int k = 1; k <= base.model.layers + 2; ++k) {
    RunConfig c = base;
    c.loss.alignment_layer = k;
    out.push_back({"layer-" + std::to_string(k), c});
  }
  return out;
}

inline std::vector<RunRecord> layer_sweep(const RunConfig& base, const FeatureArchive& archive, int jobs = 1) {
  auto variants = sweep_variants(base);
  auto runs = run_variants(variants, archive, jobs);
  return runs;
}

// Test-set binary accuracy and weighted F1 (zero labels excluded) per layer.
inline std::string sweep_csv(const std::vector<RunRecord>& runs) {
  std::string out = "layer,acc2,f1\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out += std::to_string(i + 1) + "," + format_metric(runs[i].test.acc2_excl_zero) + "," +
           format_metric(runs[i].test.f1_excl_zero) + "\n";
  }
  return out;
}

}  // namespace psamf
