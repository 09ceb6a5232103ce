// SPDX-License-Identifier: Apache-2.0
//
// Regression and classification metrics for sentiment scores in [-3, 3].
#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psamf/errors.hpp"

namespace psamf {

struct EvalReport {
  double mae = 0.0;
  std::optional<double> corr;  // undefined when either side has zero variance
  double acc7 = 0.0;
  double acc2_incl_zero = 0.0;  // negative vs non-negative, all samples
  std::optional<double> acc2_excl_zero;  // negative vs positive, zero labels dropped
  double f1_incl_zero = 0.0;
  std::optional<double> f1_excl_zero;
  std::size_t n_samples = 0;
};

namespace metrics {

// Round half away from zero after clamping to the label range.
inline int sentiment_class(double v) { return static_cast<int>(std::round(std::clamp(v, -3.0, 3.0))); }

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct BinaryScore {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
};

// Support-weighted F1 over classes {false, true}; a class with no
// predictions scores F1 = 0.
inline BinaryScore binary_score(const std::vector<bool>& truth, const std::vector<bool>& pred) {
  std::array<std::array<double, 2>, 2> cm{};  // cm[truth][pred]
  for (std::size_t i = 0; i < truth.size(); ++i) cm[truth[i]][pred[i]] += 1.0;
  const double n = static_cast<double>(truth.size());
  BinaryScore s;
  s.accuracy = (cm[0][0] + cm[1][1]) / n;
  for (int c = 0; c < 2; ++c) {
    const double tp = cm[c][c];
    const double support = cm[c][0] + cm[c][1];
    const double predicted = cm[0][c] + cm[1][c];
    const double denom = support + predicted;
    const double f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
    s.weighted_f1 += f1 * support / n;
  }
  return s;
}

}  // namespace metrics

inline EvalReport evaluate(std::span<const double> preds, std::span<const double> labels) {
  if (preds.size() != labels.size()) {
    throw InvalidArgument("evaluate: " + std::to_string(preds.size()) + " predictions vs " +
                          std::to_string(labels.size()) + " labels");
  }
  if (preds.size() < 2) throw InvalidArgument("evaluate: need at least two samples");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!std::isfinite(preds[i]) || !std::isfinite(labels[i])) throw InvalidArgument("evaluate: non-finite value");
  }
  EvalReport r;
  r.n_samples = preds.size();
  const double n = static_cast<double>(preds.size());
  std::size_t hits7 = 0;
  std::vector<bool> truth_incl, pred_incl, truth_excl, pred_excl;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    r.mae += std::abs(preds[i] - labels[i]);
    if (metrics::sentiment_class(preds[i]) == metrics::sentiment_class(labels[i])) ++hits7;
    truth_incl.push_back(labels[i] >= 0.0);
    pred_incl.push_back(preds[i] >= 0.0);
    if (labels[i] != 0.0) {
      truth_excl.push_back(labels[i] > 0.0);
      pred_excl.push_back(preds[i] > 0.0);
    }
  }
  r.mae /= n;
  r.corr = metrics::pearson(preds, labels);
  r.acc7 = static_cast<double>(hits7) / n;
  const auto incl = metrics::binary_score(truth_incl, pred_incl);
  r.acc2_incl_zero = incl.accuracy;
  r.f1_incl_zero = incl.weighted_f1;
  if (!truth_excl.empty()) {
    const auto excl = metrics::binary_score(truth_excl, pred_excl);
    r.acc2_excl_zero = excl.accuracy;
    r.f1_excl_zero = excl.weighted_f1;
  }
  return r;
}

// Fixed column order shared by the CSV emitter and the summary table.
inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"n_samples",      "mae",          "corr",         "acc7",
                                             "acc2_incl_zero", "acc2_excl_zero", "f1_incl_zero", "f1_excl_zero"};
  return cols;
}

namespace detail {
inline nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
inline std::optional<double> json_opt(const nlohmann::json& v) {
  return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
}
}  // namespace detail

// Flat key -> value object; undefined metrics serialize as null.
inline nlohmann::json report_to_json(const EvalReport& r) {
  return {{"n_samples", r.n_samples},
          {"mae", r.mae},
          {"corr", detail::opt_json(r.corr)},
          {"acc7", r.acc7},
          {"acc2_incl_zero", r.acc2_incl_zero},
          {"acc2_excl_zero", detail::opt_json(r.acc2_excl_zero)},
          {"f1_incl_zero", r.f1_incl_zero},
          {"f1_excl_zero", detail::opt_json(r.f1_excl_zero)}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.mae = j.at("mae").get<double>();
  r.corr = detail::json_opt(j.at("corr"));
  r.acc7 = j.at("acc7").get<double>();
  r.acc2_incl_zero = j.at("acc2_incl_zero").get<double>();
  r.acc2_excl_zero = detail::json_opt(j.at("acc2_excl_zero"));
  r.f1_incl_zero = j.at("f1_incl_zero").get<double>();
  r.f1_excl_zero = detail::json_opt(j.at("f1_excl_zero"));
  return r;
}

inline std::string report_csv_header() {
  std::string out;
  for (const auto& c : report_columns()) out += (out.empty() ? "" : ",") + c;
  return out;
}

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

inline std::string report_csv_row(const EvalReport& r) {
  return std::to_string(r.n_samples) + "," + format_metric(r.mae) + "," + format_metric(r.corr) + "," +
         format_metric(r.acc7) + "," + format_metric(r.acc2_incl_zero) + "," + format_metric(r.acc2_excl_zero) +
         "," + format_metric(r.f1_incl_zero) + "," + format_metric(r.f1_excl_zero);
}

struct MetricSummary {
  std::string name;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t count = 0;  // reports where the metric was defined
};

// Mean and population std of every metric across runs; undefined values
// are skipped per metric.
inline std::vector<MetricSummary> bootstrap_summary(std::span<const EvalReport> reports) {
  if (reports.empty()) throw InvalidArgument("bootstrap_summary: no reports");
  using Getter = std::optional<double> (*)(const EvalReport&);
  const std::vector<std::pair<std::string, Getter>> fields{
      {"mae", [](const EvalReport& r) -> std::optional<double> { return r.mae; }},
      {"corr", [](const EvalReport& r) { return r.corr; }},
      {"acc7", [](const EvalReport& r) -> std::optional<double> { return r.acc7; }},
      {"acc2_incl_zero", [](const EvalReport& r) -> std::optional<double> { return r.acc2_incl_zero; }},
      {"acc2_excl_zero", [](const EvalReport& r) { return r.acc2_excl_zero; }},
      {"f1_incl_zero", [](const EvalReport& r) -> std::optional<double> { return r.f1_incl_zero; }},
      {"f1_excl_zero", [](const EvalReport& r) { return r.f1_excl_zero; }},
  };
  std::vector<MetricSummary> out;
  for (const auto& [name, get] : fields) {
    MetricSummary s;
    s.name = name;
    double sum = 0.0;
    for (const auto& r : reports) {
      if (auto v = get(r)) {
        sum += *v;
        ++s.count;
      }
    }
    if (s.count > 0) {
      s.mean = sum / static_cast<double>(s.count);
      double sq = 0.0;
      for (const auto& r : reports) {
        if (auto v = get(r)) sq += (*v - s.mean) * (*v - s.mean);
      }
      s.std = std::sqrt(sq / static_cast<double>(s.count));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace psamf
