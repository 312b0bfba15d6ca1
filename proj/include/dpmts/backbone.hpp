#pragma once

// Decoder-style transformer standing in for a pretrained language model.
// Attention and feed-forward weights are frozen; positional embeddings and
// every layer norm are trainable. Blocks are pre-norm with causal attention.

#include <cmath>
#include <string>
#include <vector>

#include "dpmts/ops.hpp"
#include "dpmts/prompts.hpp"

namespace dpmts {

struct BackboneConfig {
  std::size_t hidden_dim = 16;  // D
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ff_dim = 64;
  std::size_t max_seq_len = 96;
  std::uint64_t seed = 2024;

  void validate() const {
    if (hidden_dim < 2) throw ConfigError("backbone hidden_dim must be at least 2");
    if (layers == 0 || heads == 0 || ff_dim == 0 || max_seq_len == 0)
      throw ConfigError("backbone layers, heads, ff_dim and max_seq_len must be positive");
    if (hidden_dim % heads != 0)
      throw ConfigError("backbone hidden_dim " + std::to_string(hidden_dim) + " is not divisible by " +
                        std::to_string(heads) + " heads");
  }
};

class BackboneModel {
 public:
  explicit BackboneModel(const BackboneConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::stream(cfg_.seed, 0xbac4b09e);
    const std::size_t d = cfg_.hidden_dim;
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    params_.emplace_back("backbone.pos", Tensor::uniform({cfg_.max_seq_len, d}, s, rng), true);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "backbone.layer" + std::to_string(l) + ".";
      add_norm(p + "ln1", d);
      params_.emplace_back(p + "attn_w", Tensor::uniform({d, 3 * d}, s, rng), false);
      params_.emplace_back(p + "attn_b", Tensor::uniform({3 * d}, s, rng), false);
      params_.emplace_back(p + "proj_w", Tensor::uniform({d, d}, s, rng), false);
      params_.emplace_back(p + "proj_b", Tensor::uniform({d}, s, rng), false);
      add_norm(p + "ln2", d);
      params_.emplace_back(p + "fc1_w", Tensor::uniform({d, cfg_.ff_dim}, s, rng), false);
      params_.emplace_back(p + "fc1_b", Tensor::uniform({cfg_.ff_dim}, s, rng), false);
      const double sf = 1.0 / std::sqrt(static_cast<double>(cfg_.ff_dim));
      params_.emplace_back(p + "fc2_w", Tensor::uniform({cfg_.ff_dim, d}, sf, rng), false);
      params_.emplace_back(p + "fc2_b", Tensor::uniform({d}, sf, rng), false);
    }
    add_norm("backbone.ln_f", d);
  }

  const BackboneConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  const Tensor& positions() const { return params_[0].tensor; }

  Tensor forward(const Tensor& input) const {
    if (input.rank() != 2 || input.cols() != cfg_.hidden_dim)
      throw DimensionError("backbone expects n×" + std::to_string(cfg_.hidden_dim) + " input, got " +
                           shape_str(input.shape()));
    const std::size_t n = input.rows();
    if (n > cfg_.max_seq_len)
      throw CapacityError("sequence of " + std::to_string(n) + " rows exceeds backbone capacity " +
                          std::to_string(cfg_.max_seq_len));
    Tensor h = add(input, slice_rows(positions(), 0, n));
    for (std::size_t l = 0; l < cfg_.layers; ++l) h = block(h, l);
    return layer_norm(h, layer_param(cfg_.layers, 0), layer_param(cfg_.layers, 1));
  }

 private:
  static constexpr std::size_t kPerLayer = 12;

  void add_norm(const std::string& name, std::size_t d) {
    params_.emplace_back(name + "_gamma", Tensor::filled({d}, 1.0), true);
    params_.emplace_back(name + "_beta", Tensor::zeros({d}), true);
  }

  // Slot `i` of layer `l`; layer == layers addresses the final norm.
  const Tensor& layer_param(std::size_t l, std::size_t i) const { return params_[1 + l * kPerLayer + i].tensor; }

  Tensor block(const Tensor& x, std::size_t l) const {
    const std::size_t d = cfg_.hidden_dim, dh = d / cfg_.heads;
    const Tensor h1 = layer_norm(x, layer_param(l, 0), layer_param(l, 1));
    const Tensor qkv = linear(h1, layer_param(l, 2), layer_param(l, 3));
    std::vector<Tensor> heads;
    for (std::size_t k = 0; k < cfg_.heads; ++k) {
      const Tensor q = slice_cols(qkv, k * dh, dh);
      const Tensor key = slice_cols(qkv, d + k * dh, dh);
      const Tensor v = slice_cols(qkv, 2 * d + k * dh, dh);
      const Tensor w = causal_softmax_rows(scale(matmul(q, transpose(key)), 1.0 / std::sqrt(static_cast<double>(dh))));
      heads.push_back(matmul(w, v));
    }
    const Tensor attn = linear(heads.size() == 1 ? heads.front() : concat_cols(heads), layer_param(l, 4), layer_param(l, 5));
    const Tensor r1 = add(x, attn);
    const Tensor h2 = layer_norm(r1, layer_param(l, 6), layer_param(l, 7));
    const Tensor ff = linear(gelu(linear(h2, layer_param(l, 8), layer_param(l, 9))), layer_param(l, 10), layer_param(l, 11));
    return add(r1, ff);
  }

  BackboneConfig cfg_;
  std::vector<Parameter> params_;
};

inline Tensor backbone_forward(const Tensor& input, const BackboneModel& model) { return model.forward(input); }

/// Flatten-and-project regression head over the patch positions.
class OutputHead {
 public:
  OutputHead(std::size_t num_patches, std::size_t dim, std::size_t horizon, Rng& rng)
      : num_patches_(num_patches), dim_(dim) {
    const double s = 1.0 / std::sqrt(static_cast<double>(num_patches * dim));
    weight_ = Parameter("head.w", Tensor::uniform({num_patches * dim, horizon}, s, rng), true);
    bias_ = Parameter("head.b", Tensor::uniform({horizon}, s, rng), true);
  }

  std::size_t num_patches() const { return num_patches_; }
  std::size_t horizon() const { return bias_.tensor.size(); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

  /// Row-major flatten of a P×D block (row p, column d → p·D + d), then the linear map to T values.
  Tensor project(const Tensor& patch_rows) const {
    if (patch_rows.rank() != 2 || patch_rows.rows() != num_patches_ || patch_rows.cols() != dim_)
      throw DimensionError("output head expects " + std::to_string(num_patches_) + "×" + std::to_string(dim_) +
                           " input, got " + shape_str(patch_rows.shape()));
    const Tensor flat = reshape(patch_rows, {1, num_patches_ * dim_});
    return reshape(linear(flat, weight_.tensor, bias_.tensor), {horizon()});
  }

 private:
  std::size_t num_patches_;
  std::size_t dim_;
  Parameter weight_;
  Parameter bias_;
};

/// Discards every prompt row and projects the trailing P rows to the horizon (normalized scale).
inline Tensor strip_prefix_and_project(const Tensor& hidden, const PromptBundle& bundle, const OutputHead& head) {
  if (hidden.rank() != 2 || hidden.rows() != bundle.total_rows())
    throw ContractViolation("hidden state has " + std::to_string(hidden.rank() == 2 ? hidden.rows() : 0) +
                            " rows but the bundle describes " + std::to_string(bundle.total_rows()));
  return head.project(slice_rows(hidden, bundle.prefix_rows(), bundle.P));
}

}  // namespace dpmts
