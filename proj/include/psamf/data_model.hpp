// SPDX-License-Identifier: Apache-2.0
//
// Utterance samples, padded batches, the JSON-lines feature archive and a
// seeded synthetic archive generator.
//
// Archive layout (UTF-8, one JSON object per line):
//   line 1   {"version":1,"d_v":35,"d_a":74,"vocab":1000,"splits":{"train":n,...}}
//   line 2.. {"id":..,"split":..,"tokens":[int],"visual":[[num]],"audio":[[num]],
//             "label":num,"text":str?}
#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "psamf/autograd.hpp"
#include "psamf/errors.hpp"

namespace psamf {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using TokenMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kClsToken = 0;
inline constexpr int kPadToken = 1;
inline constexpr double kLabelMin = -3.0;
inline constexpr double kLabelMax = 3.0;
inline constexpr int kArchiveVersion = 1;

struct UtteranceSample {
  std::string id;
  std::string split;
  std::vector<int> tokens;
  Matrix visual;  // [T_v x d_v]
  Matrix audio;   // [T_a x d_a]
  double label = 0.0;
  std::optional<std::string> text;

  bool operator==(const UtteranceSample&) const = default;
};

struct ArchiveManifest {
  int version = kArchiveVersion;
  int d_v = 35;
  int d_a = 74;
  int vocab = 1000;
  std::map<std::string, int> splits;

  bool operator==(const ArchiveManifest&) const = default;
};

struct FeatureArchive {
  ArchiveManifest manifest;
  std::vector<UtteranceSample> records;  // file order

  std::vector<const UtteranceSample*> split(const std::string& name) const {
    std::vector<const UtteranceSample*> out;
    for (const auto& r : records) {
      if (r.split == name) out.push_back(&r);
    }
    return out;
  }

  bool operator==(const FeatureArchive&) const = default;
};

// Padded mini-batch. Row i of every field belongs to sample i; masks mark
// valid positions. Padding value is 0 (kPadToken for text).
struct Batch {
  std::vector<std::string> ids;
  TokenMatrix tokens;           // [N x T_t]
  Mask token_mask;              // [N x T_t]
  std::vector<Matrix> visual;   // N x [T_v x d_v]
  Mask visual_mask;             // [N x T_v]
  std::vector<Matrix> audio;    // N x [T_a x d_a]
  Mask audio_mask;              // [N x T_a]
  Matrix labels;                // [N x 1]

  std::size_t size() const { return ids.size(); }
};

// Caps applied while batching; longer sequences are truncated from the tail.
struct SequenceLimits {
  int max_text = 64;
  int max_visual = 64;
  int max_audio = 64;
};

namespace detail {

inline bool finite_matrix(const Matrix& m) { return m.allFinite(); }

inline void validate_sample(const UtteranceSample& s, const ArchiveManifest& m) {
  if (s.tokens.empty() || s.visual.rows() == 0 || s.audio.rows() == 0) {
    throw ArchiveFormatError("record " + s.id + ": every sequence needs at least one step");
  }
  for (int t : s.tokens) {
    if (t < 0 || t >= m.vocab) {
      throw ArchiveFormatError("record " + s.id + ": token id " + std::to_string(t) + " outside vocabulary of " +
                               std::to_string(m.vocab));
    }
  }
  if (s.visual.cols() != m.d_v) {
    throw DimensionMismatchError("record " + s.id + ": visual width " + std::to_string(s.visual.cols()) +
                                 " but manifest d_v=" + std::to_string(m.d_v));
  }
  if (s.audio.cols() != m.d_a) {
    throw DimensionMismatchError("record " + s.id + ": audio width " + std::to_string(s.audio.cols()) +
                                 " but manifest d_a=" + std::to_string(m.d_a));
  }
  if (!finite_matrix(s.visual) || !finite_matrix(s.audio) || !std::isfinite(s.label)) {
    throw NonFiniteValueError("record " + s.id + ": non-finite value");
  }
  if (s.label < kLabelMin || s.label > kLabelMax) {
    throw LabelRangeError("record " + s.id + ": label " + std::to_string(s.label) + " outside [-3, 3]");
  }
}

inline double json_number(const nlohmann::json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_null()) throw NonFiniteValueError(where + ": null (non-finite) value");
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "NaN" || s == "nan" || s == "Infinity" || s == "-Infinity" || s == "inf" || s == "-inf") {
      throw NonFiniteValueError(where + ": non-finite value " + s);
    }
  }
  throw ArchiveFormatError(where + ": expected a number");
}

inline Matrix json_matrix(const nlohmann::json& rows, const std::string& where) {
  if (!rows.is_array()) throw ArchiveFormatError(where + ": expected an array of rows");
  if (rows.empty()) return Matrix(0, 0);
  const auto width = rows.front().is_array() ? rows.front().size() : 0;
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (!row.is_array()) throw ArchiveFormatError(where + ": expected an array of rows");
    if (row.size() != width) {
      throw DimensionMismatchError(where + ": ragged rows (" + std::to_string(row.size()) + " vs " +
                                   std::to_string(width) + ")");
    }
    for (std::size_t c = 0; c < width; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = json_number(row[c], where);
    }
  }
  return m;
}

inline nlohmann::json matrix_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline nlohmann::json manifest_to_json(const ArchiveManifest& m) {
  return {{"version", m.version}, {"d_v", m.d_v}, {"d_a", m.d_a}, {"vocab", m.vocab}, {"splits", m.splits}};
}

inline ArchiveManifest manifest_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ArchiveFormatError("manifest line is not a JSON object");
  ArchiveManifest m;
  try {
    m.version = j.at("version").get<int>();
    m.d_v = j.at("d_v").get<int>();
    m.d_a = j.at("d_a").get<int>();
    m.vocab = j.at("vocab").get<int>();
    m.splits = j.at("splits").get<std::map<std::string, int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveFormatError(std::string("manifest: ") + e.what());
  }
  if (m.version != kArchiveVersion) throw ArchiveFormatError("unsupported archive version " + std::to_string(m.version));
  if (m.d_v <= 0 || m.d_a <= 0 || m.vocab < 2) throw ArchiveFormatError("manifest dims must be positive, vocab >= 2");
  return m;
}

inline nlohmann::json sample_to_json(const UtteranceSample& s) {
  nlohmann::json j = {{"id", s.id},
                      {"split", s.split},
                      {"tokens", s.tokens},
                      {"visual", detail::matrix_json(s.visual)},
                      {"audio", detail::matrix_json(s.audio)},
                      {"label", s.label}};
  if (s.text) j["text"] = *s.text;
  return j;
}

inline UtteranceSample sample_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ArchiveFormatError("record line is not a JSON object");
  UtteranceSample s;
  try {
    s.id = j.at("id").get<std::string>();
    s.split = j.at("split").get<std::string>();
    s.tokens = j.at("tokens").get<std::vector<int>>();
    if (j.contains("text")) s.text = j.at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveFormatError(std::string("record: ") + e.what());
  }
  if (!j.contains("visual") || !j.contains("audio") || !j.contains("label")) {
    throw ArchiveFormatError("record " + s.id + ": missing visual/audio/label");
  }
  s.visual = detail::json_matrix(j.at("visual"), "record " + s.id + " visual");
  s.audio = detail::json_matrix(j.at("audio"), "record " + s.id + " audio");
  s.label = detail::json_number(j.at("label"), "record " + s.id + " label");
  return s;
}

// Checks every archive invariant; throws the matching named error.
inline void validate_archive(const FeatureArchive& a) {
  std::set<std::string> ids;
  std::map<std::string, int> counts;
  for (const auto& r : a.records) {
    detail::validate_sample(r, a.manifest);
    if (!ids.insert(r.id).second) throw DuplicateIdError("duplicate record id " + r.id);
    if (a.manifest.splits.count(r.split) == 0) {
      throw ArchiveFormatError("record " + r.id + ": split '" + r.split + "' not declared in manifest");
    }
    ++counts[r.split];
  }
  for (const auto& [name, n] : a.manifest.splits) {
    const int have = counts.count(name) ? counts.at(name) : 0;
    if (have != n) {
      throw ArchiveFormatError("split '" + name + "': manifest declares " + std::to_string(n) + " records, found " +
                               std::to_string(have));
    }
  }
}

inline std::string archive_to_string(const FeatureArchive& a) {
  std::string out = manifest_to_json(a.manifest).dump();
  out += '\n';
  for (const auto& r : a.records) {
    out += sample_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline FeatureArchive archive_from_stream(std::istream& in) {
  FeatureArchive a;
  std::string line;
  bool have_manifest = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      if (line.find("NaN") != std::string::npos || line.find("Infinity") != std::string::npos) {
        throw NonFiniteValueError("line " + std::to_string(lineno) + ": non-finite literal");
      }
      throw ArchiveFormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_manifest) {
      a.manifest = manifest_from_json(j);
      have_manifest = true;
    } else {
      a.records.push_back(sample_from_json(j));
    }
  }
  if (!have_manifest) throw ArchiveFormatError("archive is empty");
  validate_archive(a);
  return a;
}

inline FeatureArchive load_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("archive not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open archive: " + path.string());
  return archive_from_stream(in);
}

// Writes to a sibling temp file and renames it into place.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_archive(const FeatureArchive& a, const std::filesystem::path& path) {
  validate_archive(a);
  write_text_atomic(path, archive_to_string(a));
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticDims {
  int d_v = 35;
  int d_a = 74;
  int vocab = 1000;
  int min_text = 8;
  int max_text = 16;
  int min_frames = 6;
  int max_frames = 12;
};

struct SyntheticArchive {
  FeatureArchive archive;
  std::vector<std::vector<double>> latents;  // parallel to archive.records
};

inline constexpr int kSyntheticFactors = 4;
inline constexpr int kSyntheticBuckets = 8;

// Label = 3 tanh(w . z / 3) for latent z ~ N(0, I). Each latent factor
// is written into the text as bucketed "sentiment words", and into the
// visual and audio streams through fixed random mixing matrices, each
// modality with its own noise.
inline SyntheticArchive generate_synthetic_with_latents(std::uint64_t seed, int n_per_split,
                                                        const SyntheticDims& dims = {}) {
  if (n_per_split < 4) throw InvalidArgument("generate_synthetic: n_per_split must be >= 4");
  if (dims.d_v <= 0 || dims.d_a <= 0) throw InvalidArgument("generate_synthetic: dims must be positive");
  const int content_start = 2 + kSyntheticFactors * kSyntheticBuckets;
  if (dims.vocab <= content_start) {
    throw InvalidArgument("generate_synthetic: vocab must exceed " + std::to_string(content_start));
  }
  if (dims.min_text < 2 || dims.max_text < dims.min_text || dims.min_frames < 1 || dims.max_frames < dims.min_frames) {
    throw InvalidArgument("generate_synthetic: invalid sequence length range");
  }

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::array<double, kSyntheticFactors> weights{1.1, -0.9, 0.8, 0.6};

  auto mixing = [&](int d) {
    Matrix m(kSyntheticFactors, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) / std::sqrt(double(kSyntheticFactors));
    return m;
  };
  const Matrix mix_v = mixing(dims.d_v);
  const Matrix mix_a = mixing(dims.d_a);
  auto q = [](double x) { return std::round(x * 1e5) / 1e5; };

  SyntheticArchive out;
  out.archive.manifest.d_v = dims.d_v;
  out.archive.manifest.d_a = dims.d_a;
  out.archive.manifest.vocab = dims.vocab;
  const std::array<const char*, 3> split_names{"train", "valid", "test"};
  for (const char* name : split_names) out.archive.manifest.splits[name] = n_per_split;

  for (const char* name : split_names) {
    for (int i = 0; i < n_per_split; ++i) {
      Eigen::RowVectorXd z(kSyntheticFactors);
      for (int k = 0; k < kSyntheticFactors; ++k) z(k) = normal(rng);
      double s = 0.0;
      for (int k = 0; k < kSyntheticFactors; ++k) s += weights[k] * z(k);

      UtteranceSample u;
      char id[64];
      std::snprintf(id, sizeof(id), "%s-%04d", name, i);
      u.id = id;
      u.split = name;
      u.label = q(3.0 * std::tanh(s / 3.0));

      const int len = dims.min_text + static_cast<int>(unit(rng) * (dims.max_text - dims.min_text + 1));
      u.tokens.push_back(kClsToken);
      for (int t = 1; t < std::min(len, dims.max_text); ++t) {
        if (unit(rng) < 0.5) {
          const int k = static_cast<int>(unit(rng) * kSyntheticFactors) % kSyntheticFactors;
          const double noisy = z(k) + 0.3 * normal(rng);
          int bucket = static_cast<int>(std::floor((noisy + 2.0) / 4.0 * kSyntheticBuckets));
          bucket = std::clamp(bucket, 0, kSyntheticBuckets - 1);
          u.tokens.push_back(2 + k * kSyntheticBuckets + bucket);
        } else {
          const int span = dims.vocab - content_start;
          u.tokens.push_back(content_start + static_cast<int>(unit(rng) * span) % span);
        }
      }

      auto frames = [&](const Matrix& mix, double noise) {
        const int n = dims.min_frames + static_cast<int>(unit(rng) * (dims.max_frames - dims.min_frames + 1));
        const int t_len = std::min(n, dims.max_frames);
        Matrix base = z * mix;
        Matrix f(t_len, mix.cols());
        for (int t = 0; t < t_len; ++t) {
          const double drift = 1.0 + 0.2 * std::sin(0.7 * t);
          for (Eigen::Index c = 0; c < f.cols(); ++c) f(t, c) = q(drift * base(0, c) + noise * normal(rng));
        }
        return f;
      };
      u.visual = frames(mix_v, 0.3);
      u.audio = frames(mix_a, 0.5);

      out.latents.emplace_back(z.data(), z.data() + kSyntheticFactors);
      out.archive.records.push_back(std::move(u));
    }
  }
  return out;
}

inline FeatureArchive generate_synthetic(std::uint64_t seed, int n_per_split, const SyntheticDims& dims = {}) {
  return generate_synthetic_with_latents(seed, n_per_split, dims).archive;
}

// ---------------------------------------------------------------------------
// Batching

inline Batch make_batch(const std::vector<const UtteranceSample*>& samples, const SequenceLimits& limits = {}) {
  if (samples.empty()) throw InvalidArgument("make_batch: no samples");
  Batch b;
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::Index tt = 0, tv = 0, ta = 0;
  for (const auto* s : samples) {
    tt = std::max<Eigen::Index>(tt, std::min<Eigen::Index>(static_cast<Eigen::Index>(s->tokens.size()), limits.max_text));
    tv = std::max<Eigen::Index>(tv, std::min<Eigen::Index>(s->visual.rows(), limits.max_visual));
    ta = std::max<Eigen::Index>(ta, std::min<Eigen::Index>(s->audio.rows(), limits.max_audio));
  }
  const Eigen::Index dv = samples.front()->visual.cols();
  const Eigen::Index da = samples.front()->audio.cols();
  b.tokens = TokenMatrix::Constant(n, tt, kPadToken);
  b.token_mask = Mask::Constant(n, tt, false);
  b.visual_mask = Mask::Constant(n, tv, false);
  b.audio_mask = Mask::Constant(n, ta, false);
  b.labels = Matrix(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = *samples[static_cast<std::size_t>(i)];
    b.ids.push_back(s.id);
    const auto lt = std::min<Eigen::Index>(static_cast<Eigen::Index>(s.tokens.size()), tt);
    for (Eigen::Index t = 0; t < lt; ++t) {
      b.tokens(i, t) = s.tokens[static_cast<std::size_t>(t)];
      b.token_mask(i, t) = true;
    }
    Matrix v = Matrix::Zero(tv, dv);
    const auto lv = std::min(s.visual.rows(), tv);
    v.topRows(lv) = s.visual.topRows(lv);
    b.visual_mask.row(i).head(lv).setConstant(true);
    b.visual.push_back(std::move(v));
    Matrix a = Matrix::Zero(ta, da);
    const auto la = std::min(s.audio.rows(), ta);
    a.topRows(la) = s.audio.topRows(la);
    b.audio_mask.row(i).head(la).setConstant(true);
    b.audio.push_back(std::move(a));
    b.labels(i, 0) = s.label;
  }
  return b;
}

struct BatchOptions {
  bool shuffle = true;
  std::size_t min_batch = 2;  // a trailing batch smaller than this is dropped
  SequenceLimits limits{};
};

inline std::vector<Batch> make_batches(const FeatureArchive& archive, const std::string& split, std::size_t batch_size,
                                       std::uint64_t seed, const BatchOptions& opts = {}) {
  if (batch_size < 2) throw InvalidArgument("make_batches: batch_size must be >= 2");
  auto samples = archive.split(split);
  if (samples.empty()) throw EmptySplitError("split '" + split + "' is empty");
  if (opts.shuffle) {
    Rng rng(seed);
    std::shuffle(samples.begin(), samples.end(), rng);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    if (end - start < opts.min_batch) break;
    out.push_back(make_batch({samples.begin() + static_cast<std::ptrdiff_t>(start),
                              samples.begin() + static_cast<std::ptrdiff_t>(end)},
                             opts.limits));
  }
  return out;
}

}  // namespace psamf
