#pragma once

// Central finite-difference verification of reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dpmts/tensor.hpp"

namespace dpmts {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor of the relative error, so near-zero gradients are
  /// compared absolutely instead of amplifying rounding noise.
  double floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::string worst;  // "<input>[<index>]: analytic vs numeric"
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() of `loss_fn` against central differences for every
/// element of every tensor in `wrt`. `loss_fn` must rebuild the graph from
/// the current values of `wrt` on every call and return a scalar.
inline GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> wrt,
                                       GradCheckOptions options = {}) {
  std::vector<bool> flags;
  for (auto& t : wrt) {
    flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (const auto& t : wrt) {
    const auto g = t.grad();
    analytic.emplace_back(t.size(), 0.0);
    std::copy(g.begin(), g.end(), analytic.back().begin());
  }
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    wrt[k].zero_grad();
    wrt[k].set_requires_grad(flags[k]);
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto data = wrt[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + options.step;
      const double up = loss_fn().item();
      data[i] = saved - options.step;
      const double down = loss_fn().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = relative_error(analytic[k][i], numeric, options.floor);
      ++result.entries;
      if (err > result.max_rel_error || std::isnan(err)) {
        result.max_rel_error = std::isnan(err) ? INFINITY : err;
        result.worst = "input " + std::to_string(k) + "[" + std::to_string(i) +
                       "]: analytic " + std::to_string(analytic[k][i]) + " vs numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace dpmts
