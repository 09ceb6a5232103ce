// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "psamf/data_model.hpp"

namespace psamf {
namespace {

namespace fs = std::filesystem;

UtteranceSample minimal_sample(const std::string& id = "train-0", double label = 1.0) {
  UtteranceSample s;
  s.id = id;
  s.split = "train";
  s.tokens = {kClsToken, 5, 7};
  s.visual = Matrix::Constant(2, 35, 0.25);
  s.audio = Matrix::Constant(3, 74, -0.5);
  s.label = label;
  return s;
}

FeatureArchive minimal_archive() {
  FeatureArchive a;
  a.manifest.splits["train"] = 1;
  a.records.push_back(minimal_sample());
  return a;
}

FeatureArchive parse(const std::string& text) {
  std::istringstream in(text);
  return archive_from_stream(in);
}

std::string with_record_edit(const std::function<void(nlohmann::json&)>& edit) {
  auto a = minimal_archive();
  nlohmann::json rec = sample_to_json(a.records[0]);
  edit(rec);
  return manifest_to_json(a.manifest).dump() + "\n" + rec.dump() + "\n";
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("psamf_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Archive, MinimalRoundTrip) {
  const auto a = minimal_archive();
  const auto dir = temp_dir("roundtrip");
  write_archive(a, dir / "a.jsonl");
  const auto b = load_archive(dir / "a.jsonl");
  EXPECT_EQ(b.manifest.d_v, 35);
  EXPECT_EQ(b.manifest.d_a, 74);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(fs::exists(dir / "a.jsonl.tmp"));
}

TEST(Archive, OptionalTextSurvivesRoundTrip) {
  auto a = minimal_archive();
  a.records[0].text = "a fine film";
  EXPECT_EQ(parse(archive_to_string(a)), a);
}

TEST(Archive, NonFiniteFeature) {
  EXPECT_THROW(parse(with_record_edit([](auto& r) { r["visual"][0][3] = nullptr; })), NonFiniteValueError);
  EXPECT_THROW(parse(with_record_edit([](auto& r) { r["visual"][1][0] = "NaN"; })), NonFiniteValueError);
  std::string text = with_record_edit([](auto&) {});
  const auto pos = text.find("0.25");
  text.replace(pos, 4, "NaN");
  EXPECT_THROW(parse(text), NonFiniteValueError);
}

TEST(Archive, LabelOutOfRange) {
  EXPECT_THROW(parse(with_record_edit([](auto& r) { r["label"] = 3.5; })), LabelRangeError);
  EXPECT_THROW(parse(with_record_edit([](auto& r) { r["label"] = -3.01; })), LabelRangeError);
  EXPECT_NO_THROW(parse(with_record_edit([](auto& r) { r["label"] = -3.0; })));
}

TEST(Archive, DimensionMismatch) {
  EXPECT_THROW(parse(with_record_edit([](auto& r) { r["audio"][0].erase(0); })), ArchiveError);
  EXPECT_THROW(parse(with_record_edit([](auto& r) { r["visual"] = nlohmann::json::array({std::vector<double>(34, 0.0)}); })),
               DimensionMismatchError);
}

TEST(Archive, EmptySequencesAndTokens) {
  EXPECT_THROW(parse(with_record_edit([](auto& r) { r["tokens"] = nlohmann::json::array(); })), ArchiveError);
  EXPECT_THROW(parse(with_record_edit([](auto& r) { r["tokens"] = {0, 1000}; })), ArchiveError);
}

TEST(Archive, DuplicateIdsAndSplitCounts) {
  auto a = minimal_archive();
  a.records.push_back(minimal_sample());
  a.manifest.splits["train"] = 2;
  EXPECT_THROW(validate_archive(a), DuplicateIdError);
  a.records[1].id = "train-1";
  EXPECT_NO_THROW(validate_archive(a));
  a.manifest.splits["train"] = 3;
  EXPECT_THROW(validate_archive(a), ArchiveFormatError);
}

TEST(Archive, MissingFileAndGarbage) {
  EXPECT_THROW(load_archive("/nonexistent/archive.jsonl"), MissingFileError);
  EXPECT_THROW(parse("{not json"), ArchiveFormatError);
  EXPECT_THROW(parse(""), ArchiveFormatError);
}

TEST(Synthetic, DeterministicAndSeedSensitive) {
  const auto a = archive_to_string(generate_synthetic(42, 16));
  EXPECT_EQ(a, archive_to_string(generate_synthetic(42, 16)));
  EXPECT_NE(a, archive_to_string(generate_synthetic(43, 16)));
}

TEST(Synthetic, ValidArchiveShape) {
  const auto a = generate_synthetic(42, 16);
  EXPECT_NO_THROW(validate_archive(a));
  EXPECT_EQ(a.records.size(), 48u);
  EXPECT_EQ(a.split("train").size(), 16u);
  EXPECT_EQ(a.split("valid").size(), 16u);
  EXPECT_EQ(a.split("test").size(), 16u);
  for (const auto& r : a.records) EXPECT_EQ(r.tokens.front(), kClsToken);
  const auto b = parse(archive_to_string(a));
  EXPECT_EQ(a, b);
}

TEST(Synthetic, LabelDistribution) {
  const auto a = generate_synthetic(7, 64);
  double mean = 0.0, lo = 3.0, hi = -3.0;
  const auto train = a.split("train");
  for (const auto* r : train) {
    mean += r->label;
    lo = std::min(lo, r->label);
    hi = std::max(hi, r->label);
  }
  mean /= static_cast<double>(train.size());
  EXPECT_GE(mean, -1.0);
  EXPECT_LE(mean, 1.0);
  EXPECT_LE(lo, -2.0);
  EXPECT_GE(hi, 2.0);
}

// A least-squares probe on the latent factors recovers the labels, so the
// task is learnable from information the features carry.
TEST(Synthetic, LatentsExplainLabels) {
  const auto s = generate_synthetic_with_latents(42, 64);
  const auto n = static_cast<Eigen::Index>(s.latents.size());
  Eigen::MatrixXd x(n, kSyntheticFactors + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < kSyntheticFactors; ++k) x(i, k) = s.latents[static_cast<std::size_t>(i)][k];
    x(i, kSyntheticFactors) = 1.0;
    y(i) = s.archive.records[static_cast<std::size_t>(i)].label;
  }
  const Eigen::VectorXd w = x.colPivHouseholderQr().solve(y);
  EXPECT_LT((x * w - y).cwiseAbs().mean(), 0.2);
}

TEST(Batching, PaddingAndMasks) {
  auto a = minimal_archive();
  auto longer = minimal_sample("train-1", -2.0);
  longer.tokens = {kClsToken, 3, 4, 5, 6};
  longer.visual = Matrix::Constant(4, 35, 1.0);
  a.records.push_back(longer);
  a.manifest.splits["train"] = 2;
  const auto b = make_batch(a.split("train"));
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b.tokens.cols(), 5);
  EXPECT_EQ(b.tokens(0, 3), kPadToken);
  EXPECT_FALSE(b.token_mask(0, 3));
  EXPECT_TRUE(b.token_mask(1, 4));
  EXPECT_EQ(b.visual_mask.row(0).count(), 2);
  EXPECT_EQ(b.visual[0].row(3).norm(), 0.0);
  EXPECT_EQ(b.labels(1, 0), -2.0);
}

TEST(Batching, TruncatesFromTheTail) {
  auto a = minimal_archive();
  SequenceLimits limits;
  limits.max_text = 2;
  limits.max_audio = 1;
  const auto b = make_batch(a.split("train"), limits);
  EXPECT_EQ(b.tokens.cols(), 2);
  EXPECT_EQ(b.tokens(0, 1), 5);
  EXPECT_EQ(b.audio[0].rows(), 1);
}

FeatureArchive sized_archive(int n) {
  auto a = generate_synthetic(1, n);
  return a;
}

TEST(Batching, RemainderRule) {
  const auto ten = sized_archive(10);
  std::vector<std::size_t> sizes;
  for (const auto& b : make_batches(ten, "train", 4, 0)) sizes.push_back(b.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));

  const auto nine = sized_archive(9);
  sizes.clear();
  for (const auto& b : make_batches(nine, "train", 8, 0)) sizes.push_back(b.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{8}));
}

TEST(Batching, SeededOrder) {
  const auto a = sized_archive(12);
  auto ids = [&](std::uint64_t seed) {
    std::vector<std::string> out;
    for (const auto& b : make_batches(a, "train", 4, seed)) out.insert(out.end(), b.ids.begin(), b.ids.end());
    return out;
  };
  EXPECT_EQ(ids(5), ids(5));
  EXPECT_NE(ids(5), ids(6));
  BatchOptions fixed;
  fixed.shuffle = false;
  EXPECT_EQ(make_batches(a, "train", 4, 0, fixed).front().ids.front(), "train-0000");
}

TEST(Batching, Errors) {
  const auto a = sized_archive(4);
  EXPECT_THROW(make_batches(a, "train", 1, 0), InvalidArgument);
  EXPECT_THROW(make_batches(a, "dev", 2, 0), EmptySplitError);
}

}  // namespace
}  // namespace psamf
