// SPDX-License-Identifier: Apache-2.0
//
// Criterion-level checks shared by the unit suite and the acceptance
// runner. Each returns a verdict plus a one-line detail string.
#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "psamf/psamf.hpp"

namespace psamf::testing {

struct Verdict {
  bool pass = false;
  std::string detail;
};

inline bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

inline bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Small model and feature widths used throughout the suite.
inline RunConfig toy_config(int layers = 3, int split = 1) {
  RunConfig c;
  c.model.d_t = 16;
  c.model.d_t_p = 16;
  c.model.d_c = 8;
  c.model.d_f = 8;
  c.model.d_h = 8;
  c.model.heads = 2;
  c.model.ffn_dim = 16;
  c.model.layers = layers;
  c.model.split = split;
  c.model.personality_layers = 1;
  c.model.max_positions = 48;
  c.data.d_v = 6;
  c.data.d_a = 5;
  c.data.vocab = 64;
  c.data.synthetic_n = 16;
  c.batch_size = 8;
  c.steps = 4;
  c.lr = 1e-3;
  return c;
}

// Short sequences keep finite-difference sweeps cheap.
inline FeatureArchive toy_archive(const RunConfig& c, std::uint64_t seed = 3) {
  SyntheticDims dims;
  dims.d_v = c.data.d_v;
  dims.d_a = c.data.d_a;
  dims.vocab = c.data.vocab;
  dims.min_text = 4;
  dims.max_text = 7;
  dims.min_frames = 2;
  dims.max_frames = 5;
  return generate_synthetic(seed, c.data.synthetic_n, dims);
}

inline Batch probe_batch(const FeatureArchive& archive, std::size_t n = 4) {
  BatchOptions bo;
  bo.shuffle = false;
  return make_batches(archive, "train", n, 0, bo).front();
}

inline std::vector<NamedVar> trainable_parameters(const ParameterStore& store) {
  std::vector<NamedVar> out;
  for (const auto& e : store.entries()) {
    if (e.trainable) out.emplace_back(e.name, e.var);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient suite

struct GradientCase {
  std::string name;
  std::vector<GradCheck> checks;
};

inline std::vector<GradientCase> loss_gradient_cases() {
  std::vector<GradientCase> cases;
  Rng rng(11);
  const Eigen::Index n = 4, d = 5;
  Var t_s(random_matrix(n, d, rng), true);
  Var t_p(random_matrix(n, d, rng), true);
  Matrix labels = random_matrix(n, 1, rng, 1.5);

  cases.push_back({"contrastive", check_gradients([&] { return contrastive_loss(t_s, t_p, 0.5); },
                                                  {{"t_s", t_s}, {"t_p", t_p}})});
  cases.push_back({"contrastive symmetric", check_gradients([&] { return contrastive_loss(t_s, t_p, 0.5, true); },
                                                            {{"t_s", t_s}, {"t_p", t_p}})});
  cases.push_back({"compound contrastive",
                   check_gradients([&] { return compound_contrastive_loss(t_s, t_p, 0.5).loss; },
                                   {{"t_s", t_s}, {"t_p", t_p}})});

  ParameterStore store;
  Linear regression(store, "w_y", d, 1, rng, false);
  cases.push_back({"personalized constraint",
                   check_gradients([&] { return personalized_constraint_loss(t_s, t_p, labels, regression); },
                                   {{"t_s", t_s}, {"t_p", t_p}, {"w_y", regression.weight}})});

  // Cross-modal contrastive loss through pooling and the candidate projections.
  FusionConfig fc;
  fc.d_text = d;
  fc.d_hidden = 3;
  fc.d_fusion = 4;
  fc.heads = 2;
  fc.prefuse_in_v = 3;
  fc.prefuse_in_a = 3;
  FusionParams fp(store, "fusion", fc, rng);
  std::vector<Var> h_v, h_a;
  Mask mask_v = Mask::Constant(n, 3, true), mask_a = Mask::Constant(n, 4, true);
  mask_v(1, 2) = false;
  mask_a(2, 0) = false;
  mask_a(3, 3) = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    h_v.emplace_back(random_matrix(3, 3, rng), true);
    h_a.emplace_back(random_matrix(4, 3, rng), true);
  }
  std::vector<NamedVar> clm_params{{"cls_s", t_s},
                                   {"h_v0", h_v[0]},
                                   {"h_a2", h_a[2]},
                                   {"clm_proj_v.weight", fp.clm_proj_v.weight},
                                   {"clm_proj_v.bias", fp.clm_proj_v.bias},
                                   {"clm_proj_a.weight", fp.clm_proj_a.weight},
                                   {"clm_proj_a.bias", fp.clm_proj_a.bias}};
  cases.push_back({"cross-modal contrastive",
                   check_gradients([&] { return crossmodal_contrastive_loss(t_s, h_v, mask_v, h_a, mask_a, fp, 0.3).total; },
                                   clm_params)});
  return cases;
}

// Total objective of the assembled model against every trainable tensor.
inline GradientCase model_gradient_case(const std::string& name, const RunConfig& cfg) {
  const auto archive = toy_archive(cfg);
  PsaMfModel model(cfg, archive.manifest);
  const Batch batch = probe_batch(archive);
  auto params = trainable_parameters(model.parameters());
  return {name, check_gradients([&] { return model.forward(batch).l_total; }, params, 6)};
}

inline std::vector<GradientCase> model_gradient_cases() {
  std::vector<GradientCase> cases;
  RunConfig base = toy_config();
  cases.push_back(model_gradient_case("model full", base));

  RunConfig fused_align = base;
  fused_align.loss.alignment_layer = base.model.layers + 1;
  fused_align.model.personality_trainable = true;
  fused_align.model.prefusion_input = "raw";
  fused_align.model.activation = "tanh";
  cases.push_back(model_gradient_case("model va alignment, raw pre-fusion, trainable personality", fused_align));

  RunConfig shallow_align = base;
  shallow_align.loss.alignment_layer = 1;
  shallow_align.loss.symmetric = true;
  shallow_align.loss.use_prefusion = false;
  cases.push_back(model_gradient_case("model without pre-fusion", shallow_align));

  RunConfig no_ef = base;
  no_ef.loss.alignment_layer = base.model.layers + 2;
  no_ef.loss.use_enhanced_fusion = false;
  no_ef.model.serial_layernorm = false;
  cases.push_back(model_gradient_case("model without enhanced fusion", no_ef));
  return cases;
}

inline Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cases = loss_gradient_cases();
  for (auto& c : model_gradient_cases()) cases.push_back(std::move(c));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst = 0.0;
  std::size_t groups = 0;
  std::string failures;
  for (const auto& c : cases) {
    worst = std::max(worst, worst_error(c.checks));
    groups += c.checks.size();
    const auto bad = describe(c.checks);
    if (!bad.empty()) failures += "[" + c.name + "] " + bad;
  }
  std::ostringstream os;
  os << cases.size() << " cases, " << groups << " tensors, worst rel err " << worst << ", " << seconds << " s";
  if (!failures.empty()) os << "\n" << failures;
  return {failures.empty() && worst < 1e-4 && seconds < 60.0, os.str()};
}

// ---------------------------------------------------------------------------
// Analytic loss values

inline Verdict analytic_losses() {
  std::vector<std::string> bad;
  const Var eye(Matrix::Identity(2, 2));
  const double expected = std::log1p(std::exp(-1.0));
  const double cl = contrastive_loss(eye, eye, 1.0).item();
  if (std::abs(cl - expected) > 1e-9) bad.push_back("orthonormal loss " + std::to_string(cl));

  for (int n : {2, 5, 16}) {
    Matrix same(n, 3);
    same.rowwise() = Eigen::RowVector3d(0.3, -1.2, 2.0);
    const double l = contrastive_loss(Var(same), Var(same), 0.07).item();
    if (std::abs(l - std::log(static_cast<double>(n))) > 1e-12) bad.push_back("identical loss n=" + std::to_string(n));
  }

  ParameterStore store;
  Rng rng(5);
  Linear w_y(store, "w_y", 3, 1, rng, false);
  const Var basis(Matrix::Identity(3, 3));
  const double lps = personalized_constraint_loss(basis, basis, Matrix::Constant(3, 1, 2.5), w_y).item();
  if (lps != 0.0) bad.push_back("L_ps at sim 1 = " + std::to_string(lps));

  // Additivity of the alignment objective and of the total objective.
  Matrix a = random_matrix(4, 3, rng), b = random_matrix(4, 3, rng);
  AlignmentOptions opts;
  AlignmentHead head(store, "align", 3, 3, 3, opts, rng);
  auto al = alignment_loss(Var(a), Var(b), random_matrix(4, 1, rng), head);
  if (!bit_equal(al.l_align.item(), al.l_ccl.item() + al.l_ps.item())) bad.push_back("alignment additivity");

  RunConfig cfg = toy_config();
  const auto archive = toy_archive(cfg);
  PsaMfModel model(cfg, archive.manifest);
  const auto comps = model.forward(probe_batch(archive)).components();
  if (!bit_equal(comps.l_total, total_loss(comps))) bad.push_back("total additivity");
  if (!bit_equal(comps.l_total, total_loss(comps.l_ccl + comps.l_ps, comps.l_clm, comps.l_task))) {
    bad.push_back("total_loss(align, clm, task)");
  }

  std::ostringstream os;
  os << "log(1+e^-1) case " << cl << ", L_ps(sim=1) " << lps << ", total " << comps.l_total;
  for (const auto& s : bad) os << "; FAIL " << s;
  return {bad.empty(), os.str()};
}

// ---------------------------------------------------------------------------
// Masking exactness

inline Verdict masking_exactness() {
  RunConfig cfg = toy_config(4, 2);
  const auto archive = toy_archive(cfg);
  PsaMfModel model(cfg, archive.manifest);
  Batch batch = probe_batch(archive);
  batch.visual_mask.setConstant(false);
  batch.audio_mask.setConstant(false);
  const auto& params = model.fusion();
  auto shallow = encode_sentiment_shallow(model.text(), cfg.model.split, batch.tokens, batch.token_mask);
  std::vector<Var> h_v, h_a;
  for (const auto& f : batch.visual) h_v.emplace_back(Matrix::Random(f.rows(), cfg.model.d_h));
  for (const auto& f : batch.audio) h_a.emplace_back(Matrix::Random(f.rows(), cfg.model.d_h));
  const Matrix fused =
      prefuse(shallow.cls, h_v, batch.visual_mask, h_a, batch.audio_mask, model.text(), cfg.model.split + 1, params)
          .value();
  std::size_t mismatched = 0;
  for (Eigen::Index i = 0; i < fused.rows(); ++i) {
    const Matrix text_only =
        model.text().run_layers(ag::slice_rows(shallow.cls, i, 1), cfg.model.split + 1, cfg.model.layers).value();
    if (!bit_equal(Matrix(fused.row(i)), text_only)) ++mismatched;
  }
  return {mismatched == 0, std::to_string(fused.rows() - static_cast<Eigen::Index>(mismatched)) + "/" +
                               std::to_string(fused.rows()) + " rows bit-identical"};
}

// ---------------------------------------------------------------------------
// Overfitting oracle

inline RunConfig overfit_config() {
  RunConfig c;
  c.model.d_t = 16;
  c.model.d_t_p = 16;
  c.model.d_c = 8;
  c.model.d_f = 16;
  c.model.d_h = 16;
  c.model.heads = 2;
  c.model.ffn_dim = 32;
  c.model.layers = 2;
  c.model.split = 1;
  c.model.personality_layers = 1;
  c.model.max_positions = 32;
  c.model.dropout = 0.0;
  c.data.synthetic_seed = 42;
  c.data.synthetic_n = 64;
  c.batch_size = 16;
  c.steps = 300;
  c.lr = 1e-3;
  return c;
}

inline Verdict overfit_oracle() {
  const RunConfig cfg = overfit_config();
  const auto archive = load_data(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rec = train(cfg, archive);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream os;
  os << "train MAE " << rec.final_train.mae << " after " << rec.steps.size() << " steps, " << seconds << " s";
  return {rec.steps.size() == 300 && rec.final_train.mae < 0.15 && seconds < 300.0, os.str()};
}

// ---------------------------------------------------------------------------
// Metrics oracle

// Every prediction grid in {-3..3}^4 against every label grid in
// {-3..3}^4, compared with direct counting.
inline Verdict metrics_oracle() {
  constexpr int n = 4;
  std::size_t cases = 0, mismatches = 0;
  std::array<double, n> preds{}, labels{};
  auto decode = [](int code, std::array<double, n>& out) {
    for (int i = 0; i < n; ++i, code /= 7) out[static_cast<std::size_t>(i)] = code % 7 - 3;
  };
  for (int pc = 0; pc < 2401; ++pc) {
    decode(pc, preds);
    for (int yc = 0; yc < 2401; ++yc) {
      decode(yc, labels);
      const auto r = evaluate(preds, labels);
      int same = 0, incl = 0, excl = 0, kept = 0;
      for (int i = 0; i < n; ++i) {
        const auto p = static_cast<int>(preds[static_cast<std::size_t>(i)]);
        const auto y = static_cast<int>(labels[static_cast<std::size_t>(i)]);
        same += p == y;
        incl += (p >= 0) == (y >= 0);
        if (y != 0) {
          ++kept;
          excl += (p > 0) == (y > 0);
        }
      }
      bool ok = r.acc7 == same / double(n) && r.acc2_incl_zero == incl / double(n);
      ok = ok && (kept == 0 ? !r.acc2_excl_zero.has_value()
                            : r.acc2_excl_zero.has_value() && *r.acc2_excl_zero == double(excl) / kept);
      ++cases;
      mismatches += !ok;
    }
  }
  const double x[5] = {-2.0, -0.5, 0.1, 1.7, 3.0};
  double y[5];
  for (int i = 0; i < 5; ++i) y[i] = 2.0 * x[i] + 1.0;
  const auto corr = metrics::pearson(x, y);
  const bool corr_ok = corr && std::abs(*corr - 1.0) <= 1e-12;
  std::ostringstream os;
  os << cases << " grid pairs, " << mismatches << " mismatches; corr(x, 2x+1) = " << (corr ? *corr : NAN);
  return {mismatches == 0 && cases == 2401u * 2401u && corr_ok, os.str()};
}

// ---------------------------------------------------------------------------
// Harness completeness

inline RunConfig harness_config() {
  RunConfig c = toy_config(6, 3);
  c.steps = 3;
  return c;
}

inline Verdict harness_completeness() {
  const RunConfig cfg = harness_config();
  const auto archive = toy_archive(cfg);
  const auto runs = ablate(cfg, archive);
  const std::vector<std::string> expected{"full", "w/o-PF", "w/o-BF", "w/o-EF", "w/o-Lps", "w/o-Lclm"};
  std::vector<std::string> names;
  for (const auto& r : runs) names.push_back(r.variant);
  std::set<std::string> distinct_hashes;
  for (const auto& r : runs) distinct_hashes.insert(r.config_hash);

  const auto sweep = layer_sweep(cfg, archive);
  const auto reference = train(cfg, archive);
  const bool k_equals_l = sweep.size() == 8 && same_results(sweep[5], reference);
  std::size_t sweep_rows = 0;
  const auto csv = sweep_csv(sweep);
  for (char ch : csv) sweep_rows += ch == '\n';

  std::ostringstream os;
  os << "ablate variants " << names.size() << " (" << distinct_hashes.size() << " distinct configs), sweep runs "
     << sweep.size() << ", csv rows " << sweep_rows - 1 << ", k=L run "
     << (k_equals_l ? "bit-identical" : "DIFFERS") << " to train";
  return {names == expected && distinct_hashes.size() == 6 && k_equals_l && sweep_rows == 9, os.str()};
}

// ---------------------------------------------------------------------------
// Determinism

inline Verdict determinism() {
  const RunConfig cfg = harness_config();
  const auto archive = toy_archive(cfg);
  std::vector<std::string> bad;
  auto a = train(cfg, archive), b = train(cfg, archive);
  if (!same_results(a, b) || loss_curve_csv(a) != loss_curve_csv(b)) bad.push_back("train");

  RunConfig with_dropout = cfg;
  with_dropout.model.dropout = 0.3;
  with_dropout.epochs = 2;
  with_dropout.steps = 0;
  if (!same_results(train(with_dropout, archive), train(with_dropout, archive))) bad.push_back("train with dropout");

  auto abl_a = ablate(cfg, archive), abl_b = ablate(cfg, archive, 2);
  if (ablation_csv(abl_a) != ablation_csv(abl_b)) bad.push_back("ablate");
  for (std::size_t i = 0; i < abl_a.size() && i < abl_b.size(); ++i) {
    if (!same_results(abl_a[i], abl_b[i])) bad.push_back("ablate " + abl_a[i].variant);
  }
  auto sw_a = layer_sweep(cfg, archive), sw_b = layer_sweep(cfg, archive, 3);
  if (sweep_csv(sw_a) != sweep_csv(sw_b)) bad.push_back("layer-sweep");

  PsaMfModel m1(cfg, archive.manifest), m2(cfg, archive.manifest);
  if (m1.parameters().checksum() != m2.parameters().checksum()) bad.push_back("initialization");
  auto g1 = generate_synthetic(9, 8), g2 = generate_synthetic(9, 8);
  if (archive_to_string(g1) != archive_to_string(g2)) bad.push_back("gen-synth");

  std::ostringstream os;
  os << "train, dropout train, ablate (1 vs 2 threads), layer-sweep (1 vs 3 threads), init, gen-synth";
  for (const auto& s : bad) os << "; FAIL " << s;
  return {bad.empty(), os.str()};
}

// ---------------------------------------------------------------------------
// Toggle isolation

struct ToggleProbe {
  std::string toggle;
  std::vector<std::string> prefixes;  // parameters owned by the disabled term
  void (*disable)(RunConfig&);
};

inline std::vector<ToggleProbe> toggle_probes() {
  return {
      {"use_clm", {"fusion.clm_proj_"}, [](RunConfig& c) { c.loss.use_clm = false; }},
      {"use_align_ps", {"align.regression"}, [](RunConfig& c) { c.loss.use_align_ps = false; }},
      {"use_personality", {"align.", "personality."},
       [](RunConfig& c) {
         c.loss.use_personality = false;
         c.model.personality_trainable = true;
       }},
      {"use_prefusion", {"fusion.prefuse_proj_", "fusion.type_embedding_"},
       [](RunConfig& c) { c.loss.use_prefusion = false; }},
      {"use_enhanced_fusion",
       {"fusion.enhance_", "fusion.serial_", "fusion.conv_", "fusion.subnet_"},
       [](RunConfig& c) { c.loss.use_enhanced_fusion = false; }},
  };
}

// Largest |grad| over parameters matching any prefix after one probe step.
inline double probe_gradient(const RunConfig& cfg, const FeatureArchive& archive,
                             const std::vector<std::string>& prefixes, std::size_t* matched = nullptr) {
  PsaMfModel model(cfg, archive.manifest);
  auto& store = model.parameters();
  store.zero_grad();
  model.forward(probe_batch(archive)).l_total.backward();
  double worst = 0.0;
  std::size_t count = 0;
  for (const auto& e : store.entries()) {
    bool owned = false;
    for (const auto& p : prefixes) owned = owned || e.name.rfind(p, 0) == 0;
    if (!owned) continue;
    ++count;
    worst = std::max(worst, e.var.grad().cwiseAbs().maxCoeff());
  }
  if (matched) *matched = count;
  return worst;
}

inline Verdict toggle_isolation() {
  const RunConfig base = toy_config();
  const auto archive = toy_archive(base);
  std::ostringstream os;
  bool pass = true;
  for (const auto& probe : toggle_probes()) {
    RunConfig on = base, off = base;
    probe.disable(off);
    on.model.personality_trainable = off.model.personality_trainable;
    std::size_t matched = 0;
    const double live = probe_gradient(on, archive, probe.prefixes, &matched);
    const double dead = probe_gradient(off, archive, probe.prefixes);
    const bool ok = matched > 0 && live > 0.0 && dead == 0.0;
    pass = pass && ok;
    os << probe.toggle << ": " << matched << " tensors, enabled max|g| " << live << ", disabled " << dead
       << (ok ? "" : " FAIL") << "; ";
  }
  return {pass, os.str()};
}

}  // namespace psamf::testing
