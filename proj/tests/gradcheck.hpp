// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference oracle for the reverse-mode graph.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "psamf/nn.hpp"

namespace psamf::testing {

struct GradCheck {
  std::string name;
  double rel_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  int entries = 0;
};

using NamedVar = std::pair<std::string, Var>;

// Groups whose analytic and numeric gradients both have norm below this
// are compared in absolute terms (finite-difference noise dominates there):
// the reported error crosses 1e-4 exactly when |g_a - g_n| crosses kTinyGradient.
inline constexpr double kTinyGradient = 1e-7;

// Compares backward() against (f(x+h) - f(x-h)) / 2h on up to max_entries
// evenly spaced entries of every tensor. Relative error is
// |g_a - g_n| / max(|g_a|, |g_n|) over the sampled entries of each group.
inline std::vector<GradCheck> check_gradients(const std::function<Var()>& loss, const std::vector<NamedVar>& params,
                                              int max_entries = 12, double h = 1e-5) {
  for (const auto& p : params) {
    Var v = p.second;
    v.zero_grad();
  }
  Var out = loss();
  out.backward();
  std::vector<GradCheck> results;
  for (const auto& [name, param] : params) {
    Var v = param;
    const Matrix analytic = v.grad();
    const Eigen::Index size = v.value().size();
    const Eigen::Index count = std::min<Eigen::Index>(size, max_entries);
    Eigen::VectorXd a(count), n(count);
    for (Eigen::Index k = 0; k < count; ++k) {
      const Eigen::Index idx = count == size ? k : (k * size) / count;
      double& x = v.mutable_value().data()[idx];
      const double saved = x;
      double plus, minus;
      {
        ag::NoGradGuard guard;
        x = saved + h;
        plus = loss().item();
        x = saved - h;
        minus = loss().item();
      }
      x = saved;
      a(k) = analytic.data()[idx];
      n(k) = (plus - minus) / (2.0 * h);
    }
    GradCheck r;
    r.name = name;
    r.entries = static_cast<int>(count);
    r.analytic_norm = a.norm();
    r.numeric_norm = n.norm();
    const double scale = std::max(r.analytic_norm, r.numeric_norm);
    r.rel_error = scale < kTinyGradient ? (a - n).norm() / kTinyGradient * 1e-4 : (a - n).norm() / scale;
    results.push_back(r);
  }
  return results;
}

inline double worst_error(const std::vector<GradCheck>& checks) {
  double worst = 0.0;
  for (const auto& c : checks) worst = std::max(worst, c.rel_error);
  return worst;
}

inline std::string describe(const std::vector<GradCheck>& checks, double tol = 1e-4) {
  std::string out;
  for (const auto& c : checks) {
    if (c.rel_error >= tol) {
      out += c.name + " rel=" + std::to_string(c.rel_error) + " |a|=" + std::to_string(c.analytic_norm) +
             " |n|=" + std::to_string(c.numeric_norm) + "\n";
    }
  }
  return out;
}

}  // namespace psamf::testing
