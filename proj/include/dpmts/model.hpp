#pragma once

// The full forecaster: frozen text assets, the two prompt prefixes, the
// numeric patch path, the backbone and the output head, wired according to
// the selected ablation variant.

#include <array>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dpmts/backbone.hpp"
#include "dpmts/data.hpp"
#include "dpmts/prompts.hpp"
#include "dpmts/series.hpp"
#include "dpmts/text.hpp"
#include "json.hpp"

namespace dpmts {

enum class Variant { FULL, SEP, STP, DP_NTSA, SPET };

inline constexpr std::array<Variant, 5> kAllVariants = {Variant::FULL, Variant::SEP, Variant::STP, Variant::DP_NTSA,
                                                        Variant::SPET};

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::FULL: return "FULL";
    case Variant::SEP: return "SEP";
    case Variant::STP: return "STP";
    case Variant::DP_NTSA: return "DP-NTSA";
    case Variant::SPET: return "SPET";
  }
  return "FULL";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  for (auto v : kAllVariants)
    if (s == to_string(v)) return v;
  if (s == "DP_NTSA") return Variant::DP_NTSA;
  return std::nullopt;
}

inline bool uses_explicit_prompt(Variant v) { return v != Variant::STP; }
inline bool uses_textual_prompt(Variant v) { return v != Variant::SEP; }

struct PromptConfig {
  std::size_t summary_dim = 32;       // M
  std::size_t textual_dim = 32;       // d_m
  std::size_t textual_heads = 4;      // K
  std::size_t max_prompt_tokens = 48;  // cap on w
  std::size_t vocab_size = 512;
};

struct ModelConfig {
  std::size_t lookback = 15;
  std::size_t horizon = 7;
  std::size_t patch_len = 4;
  std::size_t stride = 2;
  double revin_eps = 1e-5;
  BackboneConfig backbone;
  PromptConfig prompt;
  Variant variant = Variant::FULL;

  PatchConfig patch_config() const { return {patch_len, stride, lookback}; }

  /// Longest backbone input this configuration can produce.
  std::size_t max_sequence() const {
    std::size_t n = patch_config().num_patches();
    if (uses_explicit_prompt(variant)) n += prompt.max_prompt_tokens;
    if (uses_textual_prompt(variant)) n += lookback;
    return n;
  }

  void validate() const {
    if (lookback < 2) throw ConfigError("lookback must be at least 2");
    if (horizon == 0) throw ConfigError("horizon must be positive");
    if (revin_eps <= 0.0) throw ConfigError("revin_eps must be positive");
    if (prompt.max_prompt_tokens == 0) throw ConfigError("max_prompt_tokens must be positive");
    patch_config().validate();
    backbone.validate();
    TextualPromptConfig{prompt.summary_dim, prompt.textual_dim, prompt.textual_heads, backbone.hidden_dim}.validate();
    if (prompt.vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
    if (backbone.max_seq_len < max_sequence())
      throw ConfigError("backbone max_seq_len " + std::to_string(backbone.max_seq_len) + " is below the " +
                        std::to_string(max_sequence()) + " rows this configuration can produce");
  }
};

/// Frozen, seed-determined text machinery shared by every run that uses the
/// same backbone seed: tokenizer, summary encoder and the backbone's token table.
struct FrozenAssets {
  Vocabulary vocab;
  SummaryEncoder encoder;
  Parameter token_table;

  FrozenAssets(const PromptConfig& p, std::size_t hidden_dim, std::uint64_t seed)
      : vocab(p.vocab_size, seed),
        encoder(p.vocab_size, p.summary_dim, seed),
        token_table("backbone.token_embedding",
                    [&] {
                      Rng rng = Rng::stream(seed, 0x70ce);
                      return Tensor::uniform({p.vocab_size, hidden_dim}, 1.0, rng);
                    }(),
                    false) {}

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&token_table};
    for (auto& p : encoder.parameters()) out.push_back(&p);
    return out;
  }
};

/// A window with its frozen text-side inputs precomputed.
struct PreparedWindow {
  std::string series_id;
  std::size_t start = 0;               // series index of the first input observation
  std::string start_timestamp;         // timestamp of the first input observation
  std::vector<double> inputs;          // L values
  std::vector<double> targets;         // T values
  std::vector<std::string> summaries;  // L texts, aligned with inputs
  std::string prompt;                  // rendered explicit prompt
  Tensor explicit_embedding;           // E, w×D
  Tensor summary_vectors;              // S, L×M
};

/// Builds explicit prompts, E and S for raw windows. Summary encodings are
/// memoized per distinct text.
class WindowPreparer {
 public:
  WindowPreparer(std::shared_ptr<const FrozenAssets> assets, const ModelConfig& cfg)
      : assets_(std::move(assets)), cfg_(cfg) {}

  PreparedWindow prepare(const WindowSample& sample, const TextedSeries& series) {
    if (sample.inputs.size() != cfg_.lookback)
      throw DimensionError("window has " + std::to_string(sample.inputs.size()) + " values, lookback is " +
                           std::to_string(cfg_.lookback));
    if (sample.targets.size() != cfg_.horizon)
      throw DimensionError("window has " + std::to_string(sample.targets.size()) + " targets, horizon is " +
                           std::to_string(cfg_.horizon));
    PreparedWindow w;
    w.series_id = series.id;
    w.start = sample.start;
    w.start_timestamp = series.observations.at(sample.start).timestamp;
    w.prompt = build_explicit_prompt(compute_stats(sample.inputs), cfg_.lookback, cfg_.horizon,
                                     series.prompt_description());
    w.explicit_embedding =
        embed_explicit_prompt(w.prompt, assets_->token_table.tensor, assets_->vocab, cfg_.prompt.max_prompt_tokens);
    w.summary_vectors = encode(sample.summaries);
    w.inputs = sample.inputs;
    w.targets = sample.targets;
    w.summaries = sample.summaries;
    return w;
  }

  /// S for a window's texts; rows equal encode_summary of each text.
  Tensor encode(const std::vector<std::string>& summaries) {
    if (summaries.size() != cfg_.lookback)
      throw AlignmentError("expected " + std::to_string(cfg_.lookback) + " summaries, got " +
                           std::to_string(summaries.size()));
    std::vector<double> flat;
    flat.reserve(cfg_.lookback * cfg_.prompt.summary_dim);
    for (const auto& s : summaries) {
      auto it = cache_.find(s);
      if (it == cache_.end()) it = cache_.emplace(s, encode_summary(s, assets_->encoder, assets_->vocab)).first;
      flat.insert(flat.end(), it->second.begin(), it->second.end());
    }
    return Tensor({cfg_.lookback, cfg_.prompt.summary_dim}, std::move(flat));
  }

 private:
  std::shared_ptr<const FrozenAssets> assets_;
  ModelConfig cfg_;
  std::unordered_map<std::string, std::vector<double>> cache_;
};

struct ParameterPartition {
  std::vector<const Parameter*> trainable;
  std::vector<const Parameter*> frozen;
};

class ForecastModel {
 public:
  /// Frozen parts come from cfg.backbone.seed; trainable heads from `run_seed`.
  ForecastModel(const ModelConfig& cfg, std::uint64_t run_seed, std::shared_ptr<FrozenAssets> assets = nullptr)
      : cfg_(cfg), run_seed_(run_seed), backbone_(cfg.backbone), revin_(cfg.revin_eps) {
    cfg_.validate();
    assets_ = assets ? std::move(assets)
                     : std::make_shared<FrozenAssets>(cfg_.prompt, cfg_.backbone.hidden_dim, cfg_.backbone.seed);
    if (assets_->vocab.size != cfg_.prompt.vocab_size || assets_->encoder.hidden() != cfg_.prompt.summary_dim ||
        assets_->token_table.tensor.cols() != cfg_.backbone.hidden_dim)
      throw ConfigError("frozen assets do not match the model configuration");
    Rng rng = Rng::stream(run_seed, 0x1417);
    if (uses_textual_prompt(cfg_.variant))
      textual_.emplace(TextualPromptConfig{cfg_.prompt.summary_dim, cfg_.prompt.textual_dim, cfg_.prompt.textual_heads,
                                           cfg_.backbone.hidden_dim, cfg_.variant != Variant::DP_NTSA},
                       rng);
    patch_.emplace(cfg_.patch_len, cfg_.backbone.hidden_dim, rng);
    head_.emplace(cfg_.patch_config().num_patches(), cfg_.backbone.hidden_dim, cfg_.horizon, rng);
  }

  ForecastModel(const ForecastModel&) = delete;
  ForecastModel& operator=(const ForecastModel&) = delete;
  ForecastModel(ForecastModel&&) = default;
  ForecastModel& operator=(ForecastModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  Variant variant() const { return cfg_.variant; }
  std::uint64_t run_seed() const { return run_seed_; }
  const FrozenAssets& assets() const { return *assets_; }
  std::shared_ptr<FrozenAssets> shared_assets() const { return assets_; }
  const BackboneModel& backbone() const { return backbone_; }
  BackboneModel& backbone() { return backbone_; }
  const RevIN& revin() const { return revin_; }
  RevIN& revin() { return revin_; }
  const PatchEmbedding& patch_embedding() const { return *patch_; }
  PatchEmbedding& patch_embedding() { return *patch_; }
  const OutputHead& head() const { return *head_; }
  OutputHead& head() { return *head_; }
  const TextualPrompt* textual() const { return textual_ ? &*textual_ : nullptr; }
  TextualPrompt* textual() { return textual_ ? &*textual_ : nullptr; }

  /// Every named parameter, trainable and frozen, in a stable order.
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out = assets_->parameters();
    for (auto& p : backbone_.parameters()) out.push_back(&p);
    if (textual_)
      for (auto& p : textual_->parameters()) out.push_back(&p);
    out.push_back(&revin_.gamma());
    out.push_back(&revin_.beta());
    out.push_back(&patch_->weight());
    out.push_back(&patch_->bias());
    out.push_back(&head_->weight());
    out.push_back(&head_->bias());
    return out;
  }

  std::vector<const Parameter*> parameters() const {
    auto all = const_cast<ForecastModel*>(this)->parameters();
    return {all.begin(), all.end()};
  }

  std::vector<Parameter*> trainable_parameters() {
    std::vector<Parameter*> out;
    for (auto* p : parameters())
      if (p->trainable) out.push_back(p);
    return out;
  }

  PromptBundle build_bundle(const PreparedWindow& w, RevINState& state) const {
    const Tensor normalized = revin_.normalize(w.inputs, state);
    const Tensor x = patch_->forward(patchify(normalized, cfg_.patch_config()));
    Tensor e, i;
    if (uses_explicit_prompt(cfg_.variant)) e = w.explicit_embedding;
    if (uses_textual_prompt(cfg_.variant)) i = textual_->forward(w.summary_vectors);
    const auto order = cfg_.variant == Variant::SPET ? PrefixOrder::textual_first : PrefixOrder::explicit_first;
    return assemble_bundle(e, i, x, order);
  }

  /// Forecast on the normalized scale, before the RevIN inverse.
  Tensor forward_normalized(const PreparedWindow& w, RevINState& state) const {
    const PromptBundle bundle = build_bundle(w, state);
    return strip_prefix_and_project(backbone_.forward(bundle.sequence), bundle, *head_);
  }

  /// T denormalized predictions.
  Tensor predict(const PreparedWindow& w) const {
    RevINState state;
    const Tensor y = forward_normalized(w, state);
    return revin_.denormalize(y, state);
  }

 private:
  ModelConfig cfg_;
  std::uint64_t run_seed_;
  std::shared_ptr<FrozenAssets> assets_;
  BackboneModel backbone_;
  std::optional<TextualPrompt> textual_;
  RevIN revin_;
  std::optional<PatchEmbedding> patch_;
  std::optional<OutputHead> head_;
};

inline Tensor forward_variant(const PreparedWindow& sample, const ForecastModel& model, Variant variant) {
  if (model.variant() != variant)
    throw ConfigError(std::string("model was built for variant ") + to_string(model.variant()) + ", not " +
                      to_string(variant));
  return model.predict(sample);
}

inline ParameterPartition partition_parameters(const ForecastModel& model) {
  ParameterPartition out;
  for (const Parameter* p : model.parameters()) (p->trainable ? out.trainable : out.frozen).push_back(p);
  return out;
}

/// name → checksum of every frozen parameter.
inline std::map<std::string, std::uint64_t> frozen_checksums(const ForecastModel& model) {
  std::map<std::string, std::uint64_t> out;
  for (const Parameter* p : partition_parameters(model).frozen) out[p->name] = checksum(p->tensor.data());
  return out;
}

// ---- configuration and checkpoint serialization ----

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"lookback", c.lookback},
          {"horizon", c.horizon},
          {"patch_len", c.patch_len},
          {"stride", c.stride},
          {"revin_eps", c.revin_eps},
          {"variant", to_string(c.variant)},
          {"backbone",
           {{"hidden_dim", c.backbone.hidden_dim},
            {"layers", c.backbone.layers},
            {"heads", c.backbone.heads},
            {"ff_dim", c.backbone.ff_dim},
            {"max_seq_len", c.backbone.max_seq_len},
            {"seed", c.backbone.seed}}},
          {"prompt",
           {{"summary_dim", c.prompt.summary_dim},
            {"textual_dim", c.prompt.textual_dim},
            {"textual_heads", c.prompt.textual_heads},
            {"max_prompt_tokens", c.prompt.max_prompt_tokens},
            {"vocab_size", c.prompt.vocab_size}}}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.lookback = j.at("lookback").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.patch_len = j.at("patch_len").get<std::size_t>();
  c.stride = j.at("stride").get<std::size_t>();
  c.revin_eps = j.at("revin_eps").get<double>();
  const auto v = parse_variant(j.at("variant").get<std::string>());
  if (!v) throw ValidationError("unknown variant in checkpoint");
  c.variant = *v;
  const auto& b = j.at("backbone");
  c.backbone = {b.at("hidden_dim").get<std::size_t>(), b.at("layers").get<std::size_t>(),
                b.at("heads").get<std::size_t>(),      b.at("ff_dim").get<std::size_t>(),
                b.at("max_seq_len").get<std::size_t>(), b.at("seed").get<std::uint64_t>()};
  const auto& p = j.at("prompt");
  c.prompt = {p.at("summary_dim").get<std::size_t>(), p.at("textual_dim").get<std::size_t>(),
              p.at("textual_heads").get<std::size_t>(), p.at("max_prompt_tokens").get<std::size_t>(),
              p.at("vocab_size").get<std::size_t>()};
  return c;
}

/// Self-describing JSON checkpoint: config, seed and every named parameter.
/// Doubles are written in shortest round-trip form, so loading is bit-exact.
inline nlohmann::json checkpoint_json(const ForecastModel& model) {
  nlohmann::json params = nlohmann::json::array();
  for (const Parameter* p : model.parameters())
    params.push_back({{"name", p->name},
                      {"shape", p->tensor.shape()},
                      {"trainable", p->trainable},
                      {"data", std::vector<double>(p->tensor.data().begin(), p->tensor.data().end())}});
  return {{"format", "dpmts-checkpoint"},
          {"version", 1},
          {"run_seed", model.run_seed()},
          {"config", to_json(model.config())},
          {"parameters", std::move(params)}};
}

inline void save_checkpoint(const ForecastModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << checkpoint_json(model).dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path);
}

inline ForecastModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "dpmts-checkpoint") throw ValidationError("not a dpmts checkpoint");
  ForecastModel model(model_config_from_json(j.at("config")), j.at("run_seed").get<std::uint64_t>());
  std::map<std::string, const nlohmann::json*> stored;
  for (const auto& p : j.at("parameters")) stored[p.at("name").get<std::string>()] = &p;
  for (Parameter* p : model.parameters()) {
    const auto it = stored.find(p->name);
    if (it == stored.end()) throw ValidationError("checkpoint is missing parameter " + p->name);
    const auto& entry = *it->second;
    if (entry.at("shape").get<Shape>() != p->tensor.shape())
      throw ValidationError("checkpoint shape mismatch for " + p->name);
    const auto values = entry.at("data").get<std::vector<double>>();
    auto data = p->tensor.mutable_data();
    std::copy(values.begin(), values.end(), data.begin());
    stored.erase(it);
  }
  if (!stored.empty()) throw ValidationError("checkpoint has unknown parameter " + stored.begin()->first);
  return model;
}

inline ForecastModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed checkpoint " + path + ": " + e.what());
  }
  return model_from_checkpoint(j);
}

}  // namespace dpmts
