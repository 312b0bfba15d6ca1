#pragma once

// Synthetic textual-numerical series where event text leads the numeric
// impact by one step, so the text carries information the history lacks.

#include <chrono>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dpmts/data.hpp"
#include "dpmts/random.hpp"

namespace dpmts {

struct GeneratorSpec {
  std::string id = "synthetic";
  std::string frequency = "daily";
  std::string description;
  std::string start_date = "2022-08-17";
  std::size_t length = 400;
  double level = 10.0;
  double trend_slope = 0.0;
  double ar_coef = 0.0;  // φ of the AR(1) noise
  std::size_t seasonal_period = 7;
  double seasonal_amplitude = 0.0;
  double noise_std = 0.0;
  double event_rate = 0.0;
  double event_impact = 5.0;
  std::size_t event_decay = 5;  // h: impact reaches zero after h steps
  std::vector<std::size_t> forced_events;
  std::vector<std::string> event_keywords = {"protest", "diplomatic summit", "aid package", "military exercise",
                                             "trade agreement"};
  std::vector<std::string> neutral_phrases = {"markets were calm", "routine weather update", "local sports results",
                                              "no major news today", "community festival held", "traffic was light"};
  std::uint64_t seed = 1;

  void validate() const {
    std::vector<std::string> bad;
    if (length == 0) bad.push_back("length must be positive");
    if (!(ar_coef > -1.0 && ar_coef < 1.0)) bad.push_back("ar_coef must lie in (-1, 1)");
    if (seasonal_amplitude != 0.0 && seasonal_period == 0) bad.push_back("seasonal_period must be positive");
    if (!(noise_std >= 0.0)) bad.push_back("noise_std must be non-negative");
    if (!(event_rate >= 0.0 && event_rate < 1.0)) bad.push_back("event_rate must lie in [0, 1)");
    if (event_decay == 0) bad.push_back("event_decay must be positive");
    if (neutral_phrases.empty()) bad.push_back("neutral_phrases must be nonempty");
    if ((event_rate > 0.0 || !forced_events.empty()) && event_keywords.empty())
      bad.push_back("event_keywords must be nonempty when events occur");
    for (auto t : forced_events)
      if (t >= length) bad.push_back("forced event index " + std::to_string(t) + " is past the series end");
    try {
      parse_timestamp(start_date);
    } catch (const ValidationError&) {
      bad.push_back("start_date must be an ISO-8601 date");
    }
    if (!bad.empty()) {
      std::string msg = "invalid generator spec '" + id + "':";
      for (const auto& b : bad) msg += "\n  " + b;
      throw ValidationError(msg);
    }
  }
};

struct GeneratedSeries {
  TextedSeries series;
  std::vector<bool> events;  // true where an event text was emitted
};

/// Linear decay: k steps after the event (k = 1..h) the impact is impact·(1 − (k−1)/h).
inline double event_effect(double impact, std::size_t steps_after, std::size_t decay) {
  if (steps_after == 0 || steps_after > decay) return 0.0;
  return impact * (1.0 - static_cast<double>(steps_after - 1) / static_cast<double>(decay));
}

inline GeneratedSeries generate_detailed(const GeneratorSpec& spec) {
  spec.validate();
  // Independent streams so that adding an event never perturbs noise or neutral text.
  Rng noise_rng = Rng::stream(spec.seed, 1);
  Rng event_rng = Rng::stream(spec.seed, 2);
  Rng text_rng = Rng::stream(spec.seed, 3);

  const std::size_t n = spec.length;
  std::vector<bool> events(n, false);
  for (std::size_t t = 0; t < n; ++t) events[t] = event_rng.bernoulli(spec.event_rate);
  for (auto t : spec.forced_events) events[t] = true;

  GeneratedSeries out;
  out.events = events;
  out.series.id = spec.id;
  out.series.frequency = spec.frequency;
  out.series.description = spec.description;
  const auto day0 = std::chrono::sys_days{std::chrono::days{parse_timestamp(spec.start_date) / 86400}};
  double ar = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    ar = spec.ar_coef * ar + spec.noise_std * noise_rng.normal();
    double x = spec.level + spec.trend_slope * static_cast<double>(t) + ar;
    if (spec.seasonal_amplitude != 0.0)
      x += spec.seasonal_amplitude *
           std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(spec.seasonal_period));
    const std::size_t first = t > spec.event_decay ? t - spec.event_decay : 0;
    for (std::size_t te = first; te < t; ++te)
      if (events[te]) x += event_effect(spec.event_impact, t - te, spec.event_decay);

    const std::size_t kw = spec.event_keywords.empty() ? 0 : text_rng.index(spec.event_keywords.size());
    const std::size_t np = text_rng.index(spec.neutral_phrases.size());
    std::string text = events[t] ? spec.event_keywords[kw] + " announced, expect surge" : spec.neutral_phrases[np];
    out.series.observations.push_back(
        {format_date(day0 + std::chrono::days{static_cast<long>(t)}), x, std::move(text)});
  }
  return out;
}

inline TextedSeries generate(const GeneratorSpec& spec) { return generate_detailed(spec).series; }

/// max over k = 1..max_lag of |corr(event_t, x_{t−k})|: how well past values predict shocks.
inline double shock_predictability(const GeneratedSeries& g, std::size_t max_lag) {
  const auto& obs = g.series.observations;
  double worst = 0.0;
  for (std::size_t k = 1; k <= max_lag && k < obs.size(); ++k) {
    const std::size_t m = obs.size() - k;
    double me = 0.0, mx = 0.0;
    for (std::size_t t = k; t < obs.size(); ++t) {
      me += g.events[t] ? 1.0 : 0.0;
      mx += obs[t - k].x;
    }
    me /= static_cast<double>(m);
    mx /= static_cast<double>(m);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t t = k; t < obs.size(); ++t) {
      const double e = (g.events[t] ? 1.0 : 0.0) - me;
      const double x = obs[t - k].x - mx;
      sxy += e * x;
      sxx += e * e;
      syy += x * x;
    }
    if (sxx > 0.0 && syy > 0.0) worst = std::max(worst, std::abs(sxy / std::sqrt(sxx * syy)));
  }
  return worst;
}

/// The four canonical datasets, in a fixed order.
inline std::vector<GeneratorSpec> suite_specs() {
  GeneratorSpec trend;
  trend.id = "linear-trend";
  trend.length = 400;
  trend.trend_slope = 0.05;
  trend.ar_coef = 0.5;
  trend.noise_std = 0.2;
  trend.seed = 11;

  GeneratorSpec seasonal;
  seasonal.id = "pure-seasonal";
  seasonal.length = 400;
  seasonal.seasonal_period = 7;
  seasonal.seasonal_amplitude = 3.0;
  seasonal.noise_std = 0.1;
  seasonal.seed = 12;

  GeneratorSpec event;
  event.id = "event-signal";
  event.length = 1000;
  event.seasonal_period = 7;
  event.seasonal_amplitude = 4.0;
  event.ar_coef = 0.5;
  event.noise_std = 0.1;
  event.event_rate = 0.15;
  event.event_impact = 6.0;
  event.event_decay = 3;
  event.seed = 13;

  GeneratorSpec noise;
  noise.id = "noise-only";
  noise.length = 400;
  noise.noise_std = 1.0;
  noise.seed = 14;

  return {trend, seasonal, event, noise};
}

inline std::vector<GeneratedSeries> generate_suite() {
  std::vector<GeneratedSeries> out;
  for (const auto& spec : suite_specs()) out.push_back(generate_detailed(spec));
  return out;
}

}  // namespace dpmts
