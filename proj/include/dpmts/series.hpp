#pragma once

// Numeric-path embedding: reversible instance normalization, patch slicing
// and linear patch embedding.
//
// Patch count. With P = floor((L - Lp) / stride) + 2 patches of length Lp
// taken every `stride` steps, the last patch starts at (P-1)·stride and ends
// at (P-1)·stride + Lp - 1 <= L - 1 + stride. Extending the window by
// exactly `stride` copies of its final value therefore makes every patch
// index valid, and the padded length L + stride yields
// floor((L + stride - Lp) / stride) + 1 = floor((L - Lp) / stride) + 2
// windows, i.e. the count is an identity rather than an approximation.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dpmts/ops.hpp"

namespace dpmts {

struct PatchConfig {
  std::size_t patch_len = 4;
  std::size_t stride = 2;
  std::size_t lookback = 15;

  void validate() const {
    if (patch_len == 0 || stride == 0 || lookback == 0)
      throw ConfigError("patch length, stride and lookback must be positive");
    if (patch_len > lookback)
      throw ConfigError("patch length " + std::to_string(patch_len) + " exceeds lookback " + std::to_string(lookback));
  }

  std::size_t num_patches() const { return (lookback - patch_len) / stride + 2; }

  /// Window index feeding element j of 0-based patch i (indices past the end clamp to the last value).
  std::size_t source_index(std::size_t patch, std::size_t offset) const {
    const std::size_t padded = patch * stride + offset;
    return padded < lookback ? padded : lookback - 1;
  }
};

/// The window extended with `stride` copies of its last value.
inline std::vector<double> pad_window(std::span<const double> window, std::size_t stride) {
  std::vector<double> out(window.begin(), window.end());
  out.insert(out.end(), stride, window.back());
  return out;
}

inline std::vector<std::vector<double>> patchify(std::span<const double> window, const PatchConfig& cfg) {
  cfg.validate();
  if (window.size() != cfg.lookback)
    throw DimensionError("window has " + std::to_string(window.size()) + " values, lookback is " +
                         std::to_string(cfg.lookback));
  std::vector<std::vector<double>> patches(cfg.num_patches(), std::vector<double>(cfg.patch_len));
  for (std::size_t i = 0; i < patches.size(); ++i)
    for (std::size_t j = 0; j < cfg.patch_len; ++j) patches[i][j] = window[cfg.source_index(i, j)];
  return patches;
}

/// Differentiable patchify of a length-L tensor into P×Lp.
inline Tensor patchify(const Tensor& window, const PatchConfig& cfg) {
  cfg.validate();
  if (window.size() != cfg.lookback)
    throw DimensionError("window has " + std::to_string(window.size()) + " values, lookback is " +
                         std::to_string(cfg.lookback));
  const std::size_t p = cfg.num_patches();
  std::vector<std::size_t> index;
  index.reserve(p * cfg.patch_len);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < cfg.patch_len; ++j) index.push_back(cfg.source_index(i, j));
  return gather(window, index, {p, cfg.patch_len});
}

/// Per-window statistics captured by normalization and consumed by the inverse.
struct RevINState {
  double mean = 0.0;
  double var = 0.0;  // population variance
  double eps = 1e-5;

  double stdev() const { return std::sqrt(var); }
  double denom() const { return std::sqrt(var + eps); }
};

/// Scalar-affine reversible instance normalization (one univariate series).
class RevIN {
 public:
  explicit RevIN(double eps = 1e-5)
      : gamma_("revin.gamma", Tensor::filled({1}, 1.0), true), beta_("revin.beta", Tensor::zeros({1}), true), eps_(eps) {}

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  const Parameter& gamma() const { return gamma_; }
  const Parameter& beta() const { return beta_; }
  double eps() const { return eps_; }

  /// gamma·(x − mean)/√(var + eps) + beta; records mean/var in `state`.
  Tensor normalize(std::span<const double> window, RevINState& state) const {
    if (window.empty()) throw InsufficientDataError("cannot normalize an empty window");
    const double n = static_cast<double>(window.size());
    double mean = 0.0;
    for (double v : window) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : window) var += (v - mean) * (v - mean);
    var /= n;
    state = RevINState{mean, var, eps_};
    std::vector<double> z(window.size());
    const double d = state.denom();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (window[i] - mean) / d;
    return scalar_affine(Tensor::vector(std::move(z)), gamma_.tensor, beta_.tensor);
  }

  /// ((y − beta)/gamma)·√(var + eps) + mean.
  Tensor denormalize(const Tensor& y, const RevINState& state) const {
    return inverse_scalar_affine(y, gamma_.tensor, beta_.tensor, state.denom(), state.mean);
  }

  std::vector<double> normalize_values(std::span<const double> window, RevINState& state) const {
    NoGradGuard no_grad;
    return normalize(window, state).to_vector();
  }

  std::vector<double> denormalize_values(std::span<const double> y, const RevINState& state) const {
    NoGradGuard no_grad;
    return denormalize(Tensor::vector({y.begin(), y.end()}), state).to_vector();
  }

 private:
  Parameter gamma_;
  Parameter beta_;
  double eps_;
};

/// Linear map of each length-Lp patch to the backbone width D.
class PatchEmbedding {
 public:
  PatchEmbedding(std::size_t patch_len, std::size_t dim, Rng& rng)
      : weight_("patch.w", Tensor::uniform({patch_len, dim}, 1.0 / std::sqrt(static_cast<double>(patch_len)), rng), true),
        bias_("patch.b", Tensor::uniform({dim}, 1.0 / std::sqrt(static_cast<double>(patch_len)), rng), true) {}

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

  /// X ∈ R^{P×D}; row i embeds patch i.
  Tensor forward(const Tensor& patches) const {
    if (patches.rank() != 2 || patches.cols() != weight_.tensor.shape()[0])
      throw DimensionError("patches " + shape_str(patches.shape()) + " do not match embedding input width " +
                           std::to_string(weight_.tensor.shape()[0]));
    return linear(patches, weight_.tensor, bias_.tensor);
  }

 private:
  Parameter weight_;
  Parameter bias_;
};

}  // namespace dpmts
