#pragma once

// The finite-difference suite run by `dpmts gradcheck` and the acceptance
// binary: every differentiable primitive plus the model blocks built on them.

#include <chrono>
#include <string>
#include <vector>

#include "dpmts/backbone.hpp"
#include "dpmts/gradcheck.hpp"
#include "dpmts/model.hpp"
#include "dpmts/series.hpp"

namespace dpmts {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 1e-4;
  std::size_t entries = 0;
  std::string worst;

  bool passed() const { return max_rel_error <= threshold; }
};

namespace detail {

/// Weighted sum with fixed random weights, so every output element matters.
inline Tensor probe_loss(const Tensor& y, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0x9c);
  const Tensor flat = reshape(y, {1, y.size()});
  return sum(matmul(flat, Tensor::uniform({y.size(), 1}, 1.0, rng)));
}

/// Uniform values in ±bound whose magnitude is at least `gap`, keeping ReLU inputs off the kink.
inline Tensor away_from_zero(Shape shape, double bound, double gap, Rng& rng) {
  Tensor t = Tensor::uniform(std::move(shape), bound, rng);
  for (double& v : t.mutable_data())
    if (std::abs(v) < gap) v = v < 0.0 ? v - gap : v + gap;
  return t;
}

inline GradCheckEntry make_entry(std::string name, const GradCheckResult& r, double threshold) {
  return {std::move(name), r.max_rel_error, threshold, r.entries, r.worst};
}

}  // namespace detail

inline std::vector<GradCheckEntry> run_gradcheck_suite() {
  using detail::away_from_zero;
  using detail::make_entry;
  using detail::probe_loss;
  std::vector<GradCheckEntry> out;
  Rng rng(20240601);

  {
    Tensor a = Tensor::uniform({3, 4}, 1.0, rng), b = Tensor::uniform({4, 2}, 1.0, rng);
    out.push_back(make_entry("matmul", check_gradients([&] { return sum(matmul(a, b)); }, {a, b}), 1e-6));
  }
  {
    Tensor a = Tensor::uniform({3, 5}, 2.0, rng);
    out.push_back(make_entry("softmax_rows", check_gradients([&] { return probe_loss(softmax_rows(a), 1); }, {a}), 1e-4));
    out.push_back(
        make_entry("causal_softmax_rows",
                   check_gradients([&] { return probe_loss(causal_softmax_rows(slice_cols(a, 0, 3)), 2); }, {a}), 1e-4));
  }
  {
    Tensor a = Tensor::uniform({2, 6}, 2.0, rng), g = Tensor::uniform({6}, 1.0, rng), b = Tensor::uniform({6}, 1.0, rng);
    out.push_back(
        make_entry("layer_norm", check_gradients([&] { return probe_loss(layer_norm(a, g, b), 3); }, {a, g, b}), 1e-5));
  }
  {
    Tensor a = away_from_zero({4, 3}, 1.0, 1e-3, rng);
    out.push_back(make_entry("relu", check_gradients([&] { return probe_loss(relu(a), 4); }, {a}), 1e-6));
    Tensor c = Tensor::uniform({4, 3}, 3.0, rng);
    out.push_back(make_entry("gelu", check_gradients([&] { return probe_loss(gelu(c), 5); }, {c}), 1e-4));
  }
  {
    Tensor x = Tensor::uniform({5, 3}, 1.0, rng), w = Tensor::uniform({3, 2}, 1.0, rng), b = Tensor::uniform({2}, 1.0, rng);
    out.push_back(make_entry("linear", check_gradients([&] { return probe_loss(linear(x, w, b), 6); }, {x, w, b}), 1e-6));
  }
  {
    Tensor p = Tensor::uniform({7}, 2.0, rng);
    const Tensor t = Tensor::uniform({7}, 2.0, rng);
    out.push_back(make_entry("mse_loss", check_gradients([&] { return mse_loss(p, t); }, {p}), 1e-6));
  }
  {
    Tensor x = Tensor::uniform({4, 3}, 1.0, rng), w = Tensor::uniform({3, 5}, 1.0, rng);
    Tensor b = Tensor::uniform({5}, 1.0, rng);
    const Tensor y = Tensor::uniform({20}, 1.0, rng);
    // Keep pre-activations off the ReLU kink.
    {
      NoGradGuard ng;
      auto pre = linear(x, w, b).to_vector();
      auto bd = b.mutable_data();
      for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t i = 0; i < 4; ++i)
          if (std::abs(pre[i * 5 + j]) < 1e-3) bd[j] += 1e-2;
    }
    out.push_back(make_entry(
        "composite mse(relu(xW+b))",
        check_gradients([&] { return mse_loss(reshape(relu(linear(x, w, b)), {20}), y); }, {x, w, b}), 1e-5));
  }
  {
    Tensor x = Tensor::uniform({6}, 2.0, rng), g = Tensor::filled({1}, 1.3), b = Tensor::filled({1}, -0.2);
    out.push_back(make_entry("scalar_affine (RevIN)",
                             check_gradients([&] { return probe_loss(scalar_affine(x, g, b), 7); }, {x, g, b}), 1e-4));
    out.push_back(make_entry(
        "inverse_scalar_affine (RevIN)",
        check_gradients([&] { return probe_loss(inverse_scalar_affine(x, g, b, 1.7, 4.0), 8); }, {x, g, b}), 1e-4));
  }
  for (bool attention : {true, false}) {
    Rng block_rng(77);
    TextualPrompt block({6, 8, 2, 10, attention}, block_rng);
    const Tensor s = Tensor::uniform({4, 6}, 1.0, block_rng);
    std::vector<Tensor> wrt;
    for (auto& p : block.parameters()) wrt.push_back(p.tensor);
    const Tensor target = Tensor::uniform({40}, 1.0, block_rng);
    out.push_back(make_entry(attention ? "textual prompt block" : "textual prompt block (no attention)",
                             check_gradients([&] { return mse_loss(reshape(block.forward(s), {40}), target); }, wrt),
                             1e-4));
  }
  {
    Rng prng(78);
    RevIN revin;
    revin.gamma().tensor.mutable_data()[0] = 1.2;
    revin.beta().tensor.mutable_data()[0] = 0.1;
    PatchEmbedding emb(4, 5, prng);
    const PatchConfig pc{4, 2, 15};
    std::vector<double> window(15);
    for (auto& v : window) v = prng.normal() * 2.0 + 3.0;
    const Tensor target = Tensor::uniform({pc.num_patches() * 5}, 1.0, prng);
    out.push_back(make_entry("RevIN -> patchify -> patch embedding",
                             check_gradients(
                                 [&] {
                                   RevINState st;
                                   const Tensor x = emb.forward(patchify(revin.normalize(window, st), pc));
                                   return mse_loss(reshape(x, {x.size()}), target);
                                 },
                                 {revin.gamma().tensor, revin.beta().tensor, emb.weight().tensor, emb.bias().tensor}),
                             1e-4));
  }
  {
    BackboneConfig bc;
    bc.hidden_dim = 8;
    bc.layers = 1;
    bc.heads = 2;
    bc.ff_dim = 16;
    bc.max_seq_len = 12;
    bc.seed = 79;
    BackboneModel model(bc);
    Rng hrng(80);
    OutputHead head(3, 8, 4, hrng);
    const Tensor input = Tensor::uniform({9, 8}, 1.0, hrng);
    PromptBundle bundle;
    bundle.w = 4;
    bundle.textual_rows = 2;
    bundle.P = 3;
    const Tensor target = Tensor::uniform({4}, 1.0, hrng);
    std::vector<Tensor> trainable;
    for (auto& p : model.parameters())
      if (p.trainable) trainable.push_back(p.tensor);
    const auto loss = [&] { return mse_loss(strip_prefix_and_project(model.forward(input), bundle, head), target); };
    out.push_back(make_entry("backbone layer norms + positions", check_gradients(loss, trainable), 1e-4));
    out.push_back(make_entry("output head", check_gradients(loss, {head.weight().tensor, head.bias().tensor}), 1e-4));
  }
  {
    ModelConfig mc;
    mc.lookback = 8;
    mc.horizon = 3;
    mc.patch_len = 4;
    mc.stride = 2;
    mc.backbone = {8, 1, 2, 16, 64, 81};
    mc.prompt = {6, 8, 2, 16, 64};
    ForecastModel model(mc, 5);
    WindowPreparer prep(model.shared_assets(), mc);
    TextedSeries series;
    series.id = "probe";
    const auto day0 = std::chrono::sys_days{std::chrono::days{19000}};
    Rng srng(82);
    for (std::size_t t = 0; t < 11; ++t)
      series.observations.push_back({format_date(day0 + std::chrono::days{static_cast<long>(t)}), srng.normal() + 5.0,
                                     t % 3 == 0 ? "storm warning issued" : "quiet day"});
    const auto windows = make_windows(series, Segment{"all", 0, 11}, 8, 3);
    const PreparedWindow w = prep.prepare(windows.front(), series);
    std::vector<Tensor> trainable;
    for (auto* p : model.trainable_parameters()) trainable.push_back(p->tensor);
    out.push_back(make_entry(
        "end-to-end model (all trainable)",
        check_gradients([&] { return mse_loss(model.predict(w), Tensor::vector(w.targets)); }, trainable), 1e-3));
  }
  return out;
}

}  // namespace dpmts
