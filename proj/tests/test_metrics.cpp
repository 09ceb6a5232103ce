// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"

namespace psamf {
namespace {

EvalReport eval(const std::vector<double>& p, const std::vector<double>& y) { return evaluate(p, y); }

TEST(Metrics, PerfectPrediction) {
  const auto r = eval({1, 2, -1}, {1, 2, -1});
  EXPECT_EQ(r.mae, 0.0);
  ASSERT_TRUE(r.corr.has_value());
  EXPECT_NEAR(*r.corr, 1.0, 1e-12);
  EXPECT_EQ(r.acc7, 1.0);
  EXPECT_EQ(r.acc2_incl_zero, 1.0);
  EXPECT_EQ(r.acc2_excl_zero, 1.0);
  EXPECT_EQ(r.f1_incl_zero, 1.0);
  EXPECT_EQ(r.n_samples, 3u);
}

TEST(Metrics, RoundingAndClamping) {
  EXPECT_EQ(eval({2.4, -3.6}, {2, -3}).acc7, 1.0);
  EXPECT_EQ(metrics::sentiment_class(2.5), 3);
  EXPECT_EQ(metrics::sentiment_class(-2.5), -3);
  EXPECT_EQ(metrics::sentiment_class(-0.4), 0);
  EXPECT_EQ(metrics::sentiment_class(9.0), 3);
}

TEST(Metrics, ZeroLabelConventions) {
  const auto r = eval({-0.5, 0.2, 0.1}, {-1, 0, 2});
  EXPECT_EQ(r.acc2_incl_zero, 1.0);
  ASSERT_TRUE(r.acc2_excl_zero.has_value());
  EXPECT_EQ(*r.acc2_excl_zero, 1.0);

  const auto all_zero = eval({0.3, -0.2}, {0, 0});
  EXPECT_FALSE(all_zero.acc2_excl_zero.has_value());
  EXPECT_FALSE(all_zero.f1_excl_zero.has_value());
  EXPECT_FALSE(all_zero.corr.has_value());
}

TEST(Metrics, CorrelationOfAffineMap) {
  const std::vector<double> x{-2.0, 0.3, 1.0, 2.5, -0.7};
  std::vector<double> y;
  for (double v : x) y.push_back(2.0 * v + 1.0);
  ASSERT_TRUE(metrics::pearson(x, y).has_value());
  EXPECT_NEAR(*metrics::pearson(x, y), 1.0, 1e-12);
  EXPECT_FALSE(metrics::pearson(x, std::vector<double>(5, 1.0)).has_value());
}

TEST(Metrics, NegativeSlopeGivesMinusOne) {
  const std::vector<double> x{-1.0, 0.5, 2.0, 2.2};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 - 0.5 * v);
  EXPECT_NEAR(metrics::pearson(x, y).value(), -1.0, 1e-12);
}

TEST(Metrics, InvariantUnderJointPermutation) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> p(9), y(9);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = u(rng);
    y[i] = std::round(u(rng));
  }
  const auto base = report_to_json(eval(p, y));
  std::vector<std::size_t> order(p.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> pp, yy;
    for (auto i : order) {
      pp.push_back(p[i]);
      yy.push_back(y[i]);
    }
    const auto r = report_to_json(eval(pp, yy));
    for (auto it = base.begin(); it != base.end(); ++it) {
      if (it->is_number_float()) {
        EXPECT_NEAR(r[it.key()].get<double>(), it->get<double>(), 1e-12) << it.key();
      } else {
        EXPECT_EQ(r[it.key()], *it) << it.key();
      }
    }
  }
}

TEST(Metrics, WeightedF1HandCount) {
  // truth: + + + -, pred: + + - -  -> F1(+) = 0.8, F1(-) = 2/3
  const auto r = eval({1, 1, -1, -1}, {1, 2, 3, -1});
  EXPECT_NEAR(r.f1_excl_zero.value(), 0.75 * 0.8 + 0.25 * (2.0 / 3.0), 1e-15);
  // A class that is never predicted scores zero.
  const auto skewed = eval({1, 1, 1}, {1, 2, -1});
  EXPECT_NEAR(skewed.f1_incl_zero, (2.0 / 3.0) * 0.8, 1e-15);
}

TEST(Metrics, ExhaustiveGridAgainstBruteForce) {
  const auto v = testing::metrics_oracle();
  EXPECT_TRUE(v.pass) << v.detail;
}

TEST(Metrics, Errors) {
  EXPECT_THROW(eval({1.0}, {1.0}), InvalidArgument);
  EXPECT_THROW(eval({1.0, 2.0}, {1.0}), InvalidArgument);
  EXPECT_THROW(eval({1.0, NAN}, {1.0, 2.0}), InvalidArgument);
}

TEST(Metrics, JsonAndCsvRoundTrip) {
  const auto r = eval({0.3, -0.2}, {0, 0});
  const auto j = report_to_json(r);
  EXPECT_TRUE(j["acc2_excl_zero"].is_null());
  const auto back = report_from_json(j);
  EXPECT_EQ(report_to_json(back), j);
  const auto row = report_csv_row(r);
  EXPECT_NE(row.find("undefined"), std::string::npos);
  std::size_t commas = 0;
  for (char c : report_csv_header()) commas += c == ',';
  EXPECT_EQ(commas + 1, report_columns().size());
}

TEST(BootstrapSummary, Arithmetic) {
  EvalReport a, b;
  a.mae = 0.2;
  b.mae = 0.4;
  a.corr = 0.5;
  const std::vector<EvalReport> two{a, b};
  const auto s = bootstrap_summary(two);
  EXPECT_EQ(s[0].name, "mae");
  EXPECT_NEAR(s[0].mean, 0.3, 1e-15);
  EXPECT_NEAR(s[0].std, 0.1, 1e-15);
  EXPECT_EQ(s[1].count, 1u);
  const std::vector<EvalReport> one{a};
  for (const auto& m : bootstrap_summary(one)) EXPECT_EQ(m.std, 0.0);
  EXPECT_THROW(bootstrap_summary(std::vector<EvalReport>{}), InvalidArgument);
}

}  // namespace
}  // namespace psamf
