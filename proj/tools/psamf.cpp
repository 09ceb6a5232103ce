// SPDX-License-Identifier: Apache-2.0
//
// psamf: data generation, training, evaluation, ablation, layer sweep and
// standalone metrics. Results go to stdout as JSON; diagnostics and errors go
// to stderr.

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "psamf/psamf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  int verbosity = 0;
  int jobs = 1;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "JSON config file (partial configs are merged onto defaults)");
  cmd->add_option("--set", o.overrides, "Override one key, e.g. --set loss.tau=0.1 (repeatable)")->allow_extra_args(false);
  cmd->add_option("-o,--output-dir", o.output_dir, "Directory for run artifacts (overrides output_dir)");
  cmd->add_flag("-v,--verbose", o.verbosity, "Progress on stderr (repeat for per-step output)");
}

psamf::RunConfig resolve(const RunOptions& o, const std::string& default_dir) {
  const json file = o.config_path.empty() ? json::object() : psamf::read_json_file(o.config_path);
  auto overrides = o.overrides;
  if (!o.output_dir.empty()) overrides.push_back("output_dir=\"" + o.output_dir + "\"");
  psamf::RunConfig cfg = psamf::resolve_config(file, overrides);
  if (cfg.output_dir.empty()) cfg.output_dir = (fs::path("runs") / (default_dir + "-" + psamf::config_hash(cfg))).string();
  return cfg;
}

void emit(const json& payload) { std::cout << payload.dump(2) << std::endl; }

void log(int verbosity, int level, const std::string& msg) {
  if (verbosity >= level) std::cerr << msg << std::endl;
}

psamf::StepHook progress_hook(int verbosity, const std::string& label) {
  if (verbosity < 2) return {};
  return [verbosity, label](const psamf::PsaMfModel&, const psamf::LossComponents& c, long step) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "[%s] step %ld total %.6f task %.6f", label.c_str(), step, c.l_total, c.l_task);
    log(verbosity, 2, buf);
  };
}

// Variant names like "w/o-PF" become directory names like "wo-PF".
std::string dir_name(const std::string& variant) {
  std::string out;
  for (char c : variant) {
    if (c != '/') out += c;
  }
  return out;
}

std::vector<double> read_values(const std::string& path) {
  if (!fs::exists(path)) throw psamf::MissingFileError("file not found: " + path);
  std::ifstream in(path);
  std::vector<double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) {
      if (in.peek() == EOF) break;
      throw psamf::InvalidArgument(path + ":" + std::to_string(lineno) + ": empty line");
    }
    double v = 0.0;
    const char* first = line.data() + start;
    const char* last = line.data() + line.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
      throw psamf::InvalidArgument(path + ":" + std::to_string(lineno) + ": not a number: " + line);
    }
    out.push_back(v);
  }
  return out;
}

int cmd_gen_synth(std::uint64_t seed, int n, const psamf::SyntheticDims& dims, const std::string& out, bool force,
                  int verbosity) {
  if (fs::exists(out) && !force) throw psamf::IoError("refusing to overwrite " + out + " (use --force)");
  const auto archive = psamf::generate_synthetic(seed, n, dims);
  const std::string text = psamf::archive_to_string(archive);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  psamf::write_text_atomic(out, text);
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(psamf::fnv1a(text.data(), text.size())));
  log(verbosity, 1, "wrote " + std::to_string(archive.records.size()) + " samples to " + out);
  emit({{"path", out},
        {"seed", seed},
        {"n_per_split", n},
        {"manifest", psamf::manifest_to_json(archive.manifest)},
        {"fnv1a", hash}});
  return 0;
}

int cmd_train(const RunOptions& o) {
  const auto cfg = resolve(o, "train");
  const auto archive = psamf::load_data(cfg);
  log(o.verbosity, 1, "training into " + cfg.output_dir);
  psamf::PsaMfModel* raw = nullptr;
  const auto rec = psamf::train(cfg, archive, "full", progress_hook(o.verbosity, "full"), &raw);
  std::unique_ptr<psamf::PsaMfModel> model(raw);
  psamf::write_run_outputs(cfg.output_dir, rec, model.get());
  json out = psamf::record_to_json(rec);
  out["output_dir"] = cfg.output_dir;
  emit(out);
  return 0;
}

int cmd_eval(const RunOptions& o, const std::string& weights, const std::string& split) {
  const auto cfg = resolve(o, "eval");
  const auto archive = psamf::load_data(cfg);
  psamf::PsaMfModel model(cfg, archive.manifest);
  const auto loaded = psamf::load_weights(model.parameters(), weights);
  log(o.verbosity, 1, "loaded " + std::to_string(loaded) + " tensors from " + weights);
  const auto report = model.evaluate_split(archive, split);
  json out = {{"split", split}, {"weights", weights}, {"report", psamf::report_to_json(report)}};
  fs::create_directories(cfg.output_dir);
  psamf::write_text_atomic(fs::path(cfg.output_dir) / "config.json", psamf::resolved_json(cfg).dump(2) + "\n");
  psamf::write_text_atomic(fs::path(cfg.output_dir) / "eval.json", out.dump(2) + "\n");
  out["output_dir"] = cfg.output_dir;
  emit(out);
  return 0;
}

json write_runs(const psamf::RunConfig& cfg, const std::vector<psamf::RunRecord>& runs, const std::string& csv_name,
                const std::string& csv) {
  fs::create_directories(cfg.output_dir);
  psamf::write_text_atomic(fs::path(cfg.output_dir) / "config.json", psamf::resolved_json(cfg).dump(2) + "\n");
  json rows = json::array();
  for (const auto& r : runs) {
    const auto dir = fs::path(cfg.output_dir) / dir_name(r.variant);
    psamf::write_run_outputs(dir, r);
    rows.push_back({{"variant", r.variant},
                    {"dir", dir.string()},
                    {"test", psamf::report_to_json(r.test)},
                    {"final_train_mae", r.final_train.mae}});
  }
  const auto csv_path = fs::path(cfg.output_dir) / csv_name;
  psamf::write_text_atomic(csv_path, csv);
  return {{"output_dir", cfg.output_dir}, {"csv", csv_path.string()}, {"runs", rows}};
}

int cmd_ablate(const RunOptions& o) {
  const auto cfg = resolve(o, "ablate");
  const auto archive = psamf::load_data(cfg);
  log(o.verbosity, 1, "ablation with " + std::to_string(o.jobs) + " job(s) into " + cfg.output_dir);
  const auto runs = psamf::ablate(cfg, archive, o.jobs);
  emit(write_runs(cfg, runs, "ablation.csv", psamf::ablation_csv(runs)));
  return 0;
}

int cmd_layer_sweep(const RunOptions& o) {
  const auto cfg = resolve(o, "layer-sweep");
  const auto archive = psamf::load_data(cfg);
  log(o.verbosity, 1, "layer sweep over " + std::to_string(cfg.model.layers + 2) + " positions into " + cfg.output_dir);
  const auto runs = psamf::layer_sweep(cfg, archive, o.jobs);
  emit(write_runs(cfg, runs, "layer_sweep.csv", psamf::sweep_csv(runs)));
  return 0;
}

int cmd_metrics(const std::string& preds_path, const std::string& labels_path) {
  const auto preds = read_values(preds_path);
  const auto labels = read_values(labels_path);
  emit(psamf::report_to_json(psamf::evaluate(preds, labels)));
  return 0;
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"kind", kind}, {"message", message}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PSA-MF multimodal sentiment experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::uint64_t seed = 42;
  int n = 64;
  psamf::SyntheticDims dims;
  std::string out_path;
  bool force = false;
  int gen_verbosity = 0;
  auto* gen = app.add_subcommand("gen-synth", "Write a deterministic synthetic feature archive");
  gen->add_option("--seed", seed, "Generator seed")->capture_default_str();
  gen->add_option("-n,--n-per-split", n, "Samples in each of train/valid/test")->capture_default_str();
  gen->add_option("--d-v", dims.d_v, "Visual feature width")->capture_default_str();
  gen->add_option("--d-a", dims.d_a, "Audio feature width")->capture_default_str();
  gen->add_option("--vocab", dims.vocab, "Vocabulary size")->capture_default_str();
  gen->add_option("--min-text", dims.min_text)->capture_default_str();
  gen->add_option("--max-text", dims.max_text)->capture_default_str();
  gen->add_option("--min-frames", dims.min_frames)->capture_default_str();
  gen->add_option("--max-frames", dims.max_frames)->capture_default_str();
  gen->add_option("--out", out_path, "Output archive path")->required();
  gen->add_flag("--force", force, "Overwrite an existing file");
  gen->add_flag("-v,--verbose", gen_verbosity);

  RunOptions train_opts, eval_opts, ablate_opts, sweep_opts;
  auto* train = app.add_subcommand("train", "Train the full model and write its run record");
  add_run_options(train, train_opts);

  std::string weights, split = "test";
  auto* eval = app.add_subcommand("eval", "Evaluate saved weights on one split");
  add_run_options(eval, eval_opts);
  eval->add_option("--weights", weights, "weights.jsonl written by train")->required();
  eval->add_option("--split", split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}))
      ->capture_default_str();

  auto* abl = app.add_subcommand("ablate", "Full model plus the five single-component removals");
  add_run_options(abl, ablate_opts);
  abl->add_option("-j,--jobs", ablate_opts.jobs, "Parallel runs")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("layer-sweep", "Vary the alignment layer over all L+2 positions");
  add_run_options(sweep, sweep_opts);
  sweep->add_option("-j,--jobs", sweep_opts.jobs, "Parallel runs")->check(CLI::PositiveNumber);

  std::string preds_path, labels_path;
  auto* met = app.add_subcommand("metrics", "Score a prediction file against a label file");
  met->add_option("preds", preds_path, "One prediction per line")->required();
  met->add_option("labels", labels_path, "One label per line")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), 2);
  }

  try {
    if (*gen) return cmd_gen_synth(seed, n, dims, out_path, force, gen_verbosity);
    if (*train) return cmd_train(train_opts);
    if (*eval) return cmd_eval(eval_opts, weights, split);
    if (*abl) return cmd_ablate(ablate_opts);
    if (*sweep) return cmd_layer_sweep(sweep_opts);
    if (*met) return cmd_metrics(preds_path, labels_path);
  } catch (const psamf::Error& e) {
    return fail(e.kind(), e.what(), 1);
  } catch (const nlohmann::json::exception& e) {
    return fail("config_error", e.what(), 1);
  } catch (const fs::filesystem_error& e) {
    return fail("io_error", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal_error", e.what(), 1);
  }
  return fail("usage_error", "no subcommand", 2);
}
