#pragma once

// Hashed word tokenizer, the frozen CLS-style summary encoder, and the
// window statistics that feed the explicit prompt.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <string_view>
#include <vector>

#include "dpmts/ops.hpp"

namespace dpmts {

/// Renders a number with 4 significant digits, keeping trailing zeros ("1.000", "15.00").
inline std::string format_sig4(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[48];
  std::snprintf(buf, sizeof buf, "%#.4g", v);
  return buf;
}

struct Vocabulary {
  std::size_t size = 512;
  std::string scheme = "fnv1a64-word";
  std::uint64_t seed = 0;

  Vocabulary() = default;
  Vocabulary(std::size_t v, std::uint64_t s) : size(v), seed(s) {
    if (v < 2) throw ConfigError("vocabulary size must be at least 2");
  }

  std::size_t id_of(std::string_view word) const {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
    for (unsigned char c : word) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h % size);
  }
};

namespace detail {

inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

inline bool starts_number(std::string_view s, std::size_t i) {
  const auto digit = [&](std::size_t k) { return k < s.size() && std::isdigit(static_cast<unsigned char>(s[k])); };
  if (i > 0 && is_word_byte(static_cast<unsigned char>(s[i - 1]))) return false;
  if (digit(i)) return true;
  if (s[i] == '.') return digit(i + 1);
  if (s[i] == '-' || s[i] == '+') return digit(i + 1) || (i + 2 < s.size() && s[i + 1] == '.' && digit(i + 2));
  return false;
}

}  // namespace detail

/// Lowercased words and number literals, in order. Numbers are re-rendered
/// to 4 significant digits so that "8", "8.0" and "8.000" share one token.
inline std::vector<std::string> split_words(std::string_view text) {
  std::string lower(text);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < lower.size()) {
    if (detail::starts_number(lower, i)) {
      const char* begin = lower.c_str() + i;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end != begin) {
        words.push_back(format_sig4(v));
        i += static_cast<std::size_t>(end - begin);
        continue;
      }
    }
    if (detail::is_word_byte(static_cast<unsigned char>(lower[i]))) {
      std::size_t j = i;
      while (j < lower.size() && detail::is_word_byte(static_cast<unsigned char>(lower[j]))) ++j;
      words.emplace_back(lower.substr(i, j - i));
      i = j;
    } else {
      ++i;
    }
  }
  return words;
}

inline std::vector<std::size_t> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<std::size_t> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id_of(w));
  return ids;
}

/// Frozen stand-in for a pretrained sentence encoder: token table, a CLS
/// vector and one bidirectional transformer block. The summary vector is
/// the block output at the CLS position.
class SummaryEncoder {
 public:
  SummaryEncoder(std::size_t vocab_size, std::size_t hidden, std::uint64_t seed) : hidden_(hidden) {
    if (hidden < 2) throw ConfigError("summary encoder hidden size must be at least 2");
    Rng rng = Rng::stream(seed, 0x7e47);
    const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
    const auto frozen = [&](const std::string& name, Shape shape, double bound) {
      params_.emplace_back("encoder." + name, Tensor::uniform(std::move(shape), bound, rng), false);
    };
    frozen("token_embedding", {vocab_size, hidden}, 1.0);
    frozen("cls", {1, hidden}, 1.0);
    for (const char* w : {"wq", "wk", "wv", "wo"}) frozen(w, {hidden, hidden}, s);
    frozen("bq", {hidden}, s);
    frozen("bk", {hidden}, s);
    frozen("bv", {hidden}, s);
    frozen("bo", {hidden}, s);
    frozen("ff1_w", {hidden, 2 * hidden}, s);
    frozen("ff1_b", {2 * hidden}, s);
    frozen("ff2_w", {2 * hidden, hidden}, 1.0 / std::sqrt(2.0 * static_cast<double>(hidden)));
    frozen("ff2_b", {hidden}, s);
    for (const char* ln : {"ln1", "ln2", "ln_f"}) {
      params_.emplace_back(std::string("encoder.") + ln + "_gamma", Tensor::filled({hidden}, 1.0), false);
      params_.emplace_back(std::string("encoder.") + ln + "_beta", Tensor::zeros({hidden}), false);
    }
  }

  std::size_t hidden() const { return hidden_; }

  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }

  /// Returns the CLS output for the given token ids (empty → bare CLS).
  std::vector<double> encode_ids(const std::vector<std::size_t>& ids) const {
    NoGradGuard no_grad;
    Tensor x = get("cls");
    if (!ids.empty()) x = concat_rows({x, gather_rows(get("token_embedding"), ids)});
    const Tensor h1 = layer_norm(x, get("ln1_gamma"), get("ln1_beta"));
    const Tensor q = linear(h1, get("wq"), get("bq"));
    const Tensor k = linear(h1, get("wk"), get("bk"));
    const Tensor v = linear(h1, get("wv"), get("bv"));
    const Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(hidden_)));
    const Tensor attn = linear(matmul(softmax_rows(scores), v), get("wo"), get("bo"));
    const Tensor r1 = add(x, attn);
    const Tensor h2 = layer_norm(r1, get("ln2_gamma"), get("ln2_beta"));
    const Tensor ff = linear(gelu(linear(h2, get("ff1_w"), get("ff1_b"))), get("ff2_w"), get("ff2_b"));
    const Tensor out = layer_norm(add(r1, ff), get("ln_f_gamma"), get("ln_f_beta"));
    const auto d = out.data();
    return {d.begin(), d.begin() + static_cast<std::ptrdiff_t>(hidden_)};
  }

 private:
  const Tensor& get(std::string_view short_name) const {
    for (const auto& p : params_)
      if (std::string_view(p.name).substr(8) == short_name) return p.tensor;
    throw ContractViolation("summary encoder has no parameter " + std::string(short_name));
  }

  std::size_t hidden_;
  std::vector<Parameter> params_;
};

/// M-dimensional summary of one timestamp's text.
inline std::vector<double> encode_summary(std::string_view text, const SummaryEncoder& enc, const Vocabulary& vocab) {
  return enc.encode_ids(tokenize(text, vocab));
}

/// Stacks encode_summary of each timestamp's text into an L×M matrix.
inline Tensor encode_window_texts(const std::vector<std::string>& summaries, std::size_t lookback,
                                  const SummaryEncoder& enc, const Vocabulary& vocab) {
  if (summaries.size() != lookback)
    throw AlignmentError("expected " + std::to_string(lookback) + " summaries aligned to the window, got " +
                         std::to_string(summaries.size()));
  std::vector<double> flat;
  flat.reserve(lookback * enc.hidden());
  for (const auto& s : summaries) {
    const auto row = encode_summary(s, enc, vocab);
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor({lookback, enc.hidden()}, std::move(flat));
}

enum class Trend { upward, downward, flat };

inline const char* to_string(Trend t) {
  switch (t) {
    case Trend::upward: return "upward";
    case Trend::downward: return "downward";
    case Trend::flat: return "flat";
  }
  return "flat";
}

struct WindowStats {
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  double slope = 0.0;
  Trend trend = Trend::flat;
  std::vector<std::size_t> top_lags;
};

/// Biased sample autocorrelation at each lag 1..L-1 (mean removed). Empty for constant input.
inline std::vector<double> autocorrelations(std::span<const double> x) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double v : x) denom += (v - mean) * (v - mean);
  if (denom == 0.0) return {};
  std::vector<double> acf(n - 1);
  for (std::size_t k = 1; k < n; ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) s += (x[t] - mean) * (x[t + k] - mean);
    acf[k - 1] = s / denom;
  }
  return acf;
}

inline WindowStats compute_stats(std::span<const double> window) {
  const std::size_t n = window.size();
  if (n < 2) throw InsufficientDataError("window statistics need at least 2 values, got " + std::to_string(n));
  WindowStats st;
  std::vector<double> sorted(window.begin(), window.end());
  std::sort(sorted.begin(), sorted.end());
  st.min = sorted.front();
  st.max = sorted.back();
  st.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  if (st.min == st.max) return st;  // flat, slope 0, no lags

  const double t_mean = 0.5 * static_cast<double>(n - 1);
  double x_mean = 0.0;
  for (double v : window) x_mean += v;
  x_mean /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - t_mean;
    sxy += dt * (window[t] - x_mean);
    sxx += dt * dt;
  }
  st.slope = sxy / sxx;
  st.trend = st.slope > 1e-9 ? Trend::upward : st.slope < -1e-9 ? Trend::downward : Trend::flat;

  const auto acf = autocorrelations(window);
  std::vector<std::size_t> lags(acf.size());
  for (std::size_t k = 0; k < lags.size(); ++k) lags[k] = k + 1;
  std::stable_sort(lags.begin(), lags.end(), [&](std::size_t a, std::size_t b) { return acf[a - 1] > acf[b - 1]; });
  lags.resize(std::min<std::size_t>(5, lags.size()));
  st.top_lags = std::move(lags);
  return st;
}

}  // namespace dpmts
