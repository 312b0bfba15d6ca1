#pragma once

// The two prompt prefixes.
//
// The explicit prefix is a rendered instruction/statistics sentence looked
// up in the backbone's frozen token table. The textual prefix refines the
// per-timestamp summary vectors with a trainable projection, multi-head
// self-attention, a projection to the backbone width, and ReLU.

#include <cmath>
#include <string>
#include <vector>

#include "dpmts/ops.hpp"
#include "dpmts/text.hpp"

namespace dpmts {

struct ExplicitPromptTemplate {
  std::string description;

  std::string render(const WindowStats& stats, std::size_t lookback, std::size_t horizon) const {
    std::string lags;
    for (std::size_t i = 0; i < stats.top_lags.size(); ++i)
      lags += (i ? ", " : "") + std::to_string(stats.top_lags[i]);
    if (lags.empty()) lags = "none";
    std::string out = description;
    if (!out.empty()) out += ' ';
    out += "Task: given the previous " + std::to_string(lookback) + " steps, forecast the next " +
           std::to_string(horizon) + " steps. Statistics: min " + format_sig4(stats.min) + ", max " +
           format_sig4(stats.max) + ", median " + format_sig4(stats.median) + ", the trend is " +
           to_string(stats.trend) + ", top lags are " + lags + ".";
    return out;
  }
};

inline std::string build_explicit_prompt(const WindowStats& stats, std::size_t lookback, std::size_t horizon,
                                         const std::string& description) {
  return ExplicitPromptTemplate{description}.render(stats, lookback, horizon);
}

/// w×D rows of the frozen token table, one per prompt token (first `max_tokens` kept).
inline Tensor embed_explicit_prompt(const std::string& prompt, const Tensor& token_table, const Vocabulary& vocab,
                                    std::size_t max_tokens = SIZE_MAX) {
  auto ids = tokenize(prompt, vocab);
  if (ids.empty()) throw InvalidPromptError("explicit prompt produced no tokens");
  if (ids.size() > max_tokens) ids.resize(max_tokens);
  NoGradGuard no_grad;
  return gather_rows(token_table, ids);
}

struct TextualPromptConfig {
  std::size_t summary_dim = 32;  // M
  std::size_t model_dim = 32;    // d_m
  std::size_t heads = 4;         // K
  std::size_t output_dim = 16;   // backbone width D
  bool attention = true;         // false: projection → projection → ReLU only

  std::size_t head_dim() const { return model_dim / heads; }

  void validate() const {
    if (summary_dim == 0 || model_dim == 0 || output_dim == 0 || heads == 0)
      throw ConfigError("textual prompt dimensions must be positive");
    if (model_dim % heads != 0)
      throw ConfigError("textual prompt width " + std::to_string(model_dim) + " is not divisible by " +
                        std::to_string(heads) + " heads");
  }
};

/// Trainable textual-prompt block. Head k owns its own query/key/value
/// matrices of shape d_m×(d_m/K); head outputs are concatenated back to
/// width d_m before the output projection.
class TextualPrompt {
 public:
  TextualPrompt(TextualPromptConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const auto init = [&](std::string name, Shape shape, std::size_t fan_in) {
      params_.emplace_back("textual." + std::move(name),
                           Tensor::uniform(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng), true);
    };
    init("in_w", {cfg_.summary_dim, cfg_.model_dim}, cfg_.summary_dim);
    init("in_b", {cfg_.model_dim}, cfg_.summary_dim);
    if (cfg_.attention) {
      for (std::size_t k = 0; k < cfg_.heads; ++k)
        for (const char* m : {"wq", "wk", "wv"})
          init("head" + std::to_string(k) + "." + m, {cfg_.model_dim, cfg_.head_dim()}, cfg_.model_dim);
    }
    init("out_w", {cfg_.model_dim, cfg_.output_dim}, cfg_.model_dim);
    init("out_b", {cfg_.output_dim}, cfg_.model_dim);
  }

  const TextualPromptConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  const Tensor& in_w() const { return params_[0].tensor; }
  const Tensor& in_b() const { return params_[1].tensor; }
  const Tensor& wq(std::size_t k) const { return params_[2 + 3 * k].tensor; }
  const Tensor& wk(std::size_t k) const { return params_[3 + 3 * k].tensor; }
  const Tensor& wv(std::size_t k) const { return params_[4 + 3 * k].tensor; }
  const Tensor& out_w() const { return params_[params_.size() - 2].tensor; }
  const Tensor& out_b() const { return params_.back().tensor; }

  /// Per-head attention weight matrices (L×L) for the given summaries.
  std::vector<Tensor> attention_weights(const Tensor& summaries) const {
    require_attention();
    const Tensor projected = project_in(summaries);
    std::vector<Tensor> out;
    for (std::size_t k = 0; k < cfg_.heads; ++k) out.push_back(head_weights(projected, k));
    return out;
  }

  /// I ∈ R^{L×D}, elementwise ≥ 0.
  Tensor forward(const Tensor& summaries) const {
    Tensor mixed = project_in(summaries);
    if (cfg_.attention) {
      std::vector<Tensor> heads;
      for (std::size_t k = 0; k < cfg_.heads; ++k)
        heads.push_back(matmul(head_weights(mixed, k), matmul(mixed, wv(k))));
      mixed = concat_cols(heads);
    }
    return relu(linear(mixed, out_w(), out_b()));
  }

 private:
  void require_attention() const {
    if (!cfg_.attention) throw ConfigError("textual prompt was built without self-attention");
  }

  Tensor project_in(const Tensor& summaries) const {
    if (summaries.rank() != 2 || summaries.cols() != cfg_.summary_dim)
      throw DimensionError("textual prompt expects L×" + std::to_string(cfg_.summary_dim) + " summaries, got " +
                           shape_str(summaries.shape()));
    return linear(summaries, in_w(), in_b());
  }

  Tensor head_weights(const Tensor& projected, std::size_t k) const {
    const Tensor q = matmul(projected, wq(k));
    const Tensor key = matmul(projected, wk(k));
    return softmax_rows(scale(matmul(q, transpose(key)), 1.0 / std::sqrt(static_cast<double>(cfg_.head_dim()))));
  }

  TextualPromptConfig cfg_;
  std::vector<Parameter> params_;
};

inline Tensor textual_prompt_forward(const Tensor& summaries, const TextualPrompt& block) {
  return block.forward(summaries);
}

enum class PrefixOrder { explicit_first, textual_first };

/// Backbone input: optional explicit rows, optional textual rows, then patch rows.
struct PromptBundle {
  Tensor explicit_prefix;  // E, w×D (absent when w == 0)
  Tensor textual_prefix;   // I, L×D (absent when textual_rows == 0)
  Tensor patches;          // X, P×D
  std::size_t w = 0;
  std::size_t textual_rows = 0;
  std::size_t P = 0;
  PrefixOrder order = PrefixOrder::explicit_first;
  Tensor sequence;  // (w + textual_rows + P)×D

  std::size_t prefix_rows() const { return w + textual_rows; }
  std::size_t total_rows() const { return w + textual_rows + P; }
};

inline PromptBundle assemble_bundle(const Tensor& explicit_prefix, const Tensor& textual_prefix, const Tensor& patches,
                                    PrefixOrder order = PrefixOrder::explicit_first) {
  if (!patches.defined() || patches.rank() != 2) throw DimensionError("patch embedding must be a P×D matrix");
  const std::size_t d = patches.cols();
  const auto check = [d](const Tensor& t, const char* what) {
    if (t.defined() && (t.rank() != 2 || t.cols() != d))
      throw DimensionError(std::string(what) + " has shape " + shape_str(t.shape()) + " but patches have width " +
                           std::to_string(d));
  };
  check(explicit_prefix, "explicit prefix");
  check(textual_prefix, "textual prefix");

  PromptBundle b;
  b.explicit_prefix = explicit_prefix;
  b.textual_prefix = textual_prefix;
  b.patches = patches;
  b.w = explicit_prefix.defined() ? explicit_prefix.rows() : 0;
  b.textual_rows = textual_prefix.defined() ? textual_prefix.rows() : 0;
  b.P = patches.rows();
  b.order = order;
  std::vector<Tensor> parts;
  const Tensor& first = order == PrefixOrder::explicit_first ? explicit_prefix : textual_prefix;
  const Tensor& second = order == PrefixOrder::explicit_first ? textual_prefix : explicit_prefix;
  if (first.defined()) parts.push_back(first);
  if (second.defined()) parts.push_back(second);
  parts.push_back(patches);
  b.sequence = parts.size() == 1 ? patches : concat_rows(parts);
  return b;
}

}  // namespace dpmts
