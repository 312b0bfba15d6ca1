#pragma once

// Strict JSON run configuration. Unknown keys and wrong types are errors;
// every problem in a document is reported at once.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "dpmts/datagen.hpp"
#include "dpmts/model.hpp"
#include "dpmts/train.hpp"
#include "json.hpp"

namespace dpmts {

struct RunConfigFile {
  std::filesystem::path manifest;
  std::vector<std::string> series;  // empty: every series in the manifest
  std::filesystem::path output_dir = "runs";
  bool save_predictions = false;
  TrainConfig train;
  ModelConfig model;  // lookback, horizon and variant mirror `train`
};

namespace detail {

/// Collects type and key errors while reading a JSON object tree.
class StrictReader {
 public:
  std::vector<std::string> errors;

  /// Rejects keys outside `allowed`; false when `j` is not an object.
  bool object(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
      errors.push_back(path + ": expected an object");
      return false;
    }
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
      if (!ok.count(key)) errors.push_back(join(path, key) + ": unknown key");
    return true;
  }

  void size(const nlohmann::json& j, const std::string& path, const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0))
      out = v.get<std::size_t>();
    else
      errors.push_back(join(path, key) + ": expected a non-negative integer");
  }

  void u64(const nlohmann::json& j, const std::string& path, const char* key, std::uint64_t& out) {
    std::size_t v = out;
    size(j, path, key, v);
    out = v;
  }

  void number(const nlohmann::json& j, const std::string& path, const char* key, double& out) {
    if (!j.contains(key)) return;
    if (j[key].is_number())
      out = j[key].get<double>();
    else
      errors.push_back(join(path, key) + ": expected a number");
  }

  void boolean(const nlohmann::json& j, const std::string& path, const char* key, bool& out) {
    if (!j.contains(key)) return;
    if (j[key].is_boolean())
      out = j[key].get<bool>();
    else
      errors.push_back(join(path, key) + ": expected true or false");
  }

  void string(const nlohmann::json& j, const std::string& path, const char* key, std::string& out) {
    if (!j.contains(key)) return;
    if (j[key].is_string())
      out = j[key].get<std::string>();
    else
      errors.push_back(join(path, key) + ": expected a string");
  }

  void strings(const nlohmann::json& j, const std::string& path, const char* key, std::vector<std::string>& out) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    bool ok = v.is_array();
    if (ok)
      for (const auto& e : v) ok = ok && e.is_string();
    if (ok)
      out = v.get<std::vector<std::string>>();
    else
      errors.push_back(join(path, key) + ": expected an array of strings");
  }

  void sizes(const nlohmann::json& j, const std::string& path, const char* key, std::vector<std::size_t>& out) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    bool ok = v.is_array();
    if (ok)
      for (const auto& e : v) ok = ok && (e.is_number_unsigned() || (e.is_number_integer() && e.get<long long>() >= 0));
    if (ok)
      out = v.get<std::vector<std::size_t>>();
    else
      errors.push_back(join(path, key) + ": expected an array of non-negative integers");
  }

  static std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
};

inline void fail_with(const std::string& what, const std::vector<std::string>& errors) {
  std::string msg = what + " (" + std::to_string(errors.size()) + (errors.size() == 1 ? " problem):" : " problems):");
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

template <class F>
void collect(std::vector<std::string>& errors, F&& check) {
  try {
    check();
  } catch (const Error& e) {
    errors.push_back(e.what());
  }
}

}  // namespace detail

/// Parses and validates a run configuration; relative dataset and output
/// paths are resolved against `base_dir`.
inline RunConfigFile parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  detail::StrictReader r;
  RunConfigFile c;
  if (!r.object(j, "", {"dataset", "output_dir", "save_predictions", "train", "backbone", "patch", "prompt", "revin_eps"}))
    detail::fail_with("invalid configuration", r.errors);

  if (!j.contains("dataset")) {
    r.errors.push_back("dataset: required (object with \"manifest\")");
  } else if (r.object(j["dataset"], "dataset", {"manifest", "series"})) {
    const auto& d = j["dataset"];
    std::string manifest;
    r.string(d, "dataset", "manifest", manifest);
    if (!d.contains("manifest")) r.errors.push_back("dataset.manifest: required");
    else if (manifest.empty() && d["manifest"].is_string()) r.errors.push_back("dataset.manifest: must not be empty");
    c.manifest = manifest;
    r.strings(d, "dataset", "series", c.series);
  }
  std::string out_dir = c.output_dir.string();
  r.string(j, "", "output_dir", out_dir);
  c.output_dir = out_dir;
  r.boolean(j, "", "save_predictions", c.save_predictions);

  if (j.contains("train") &&
      r.object(j["train"], "train",
               {"learning_rate", "max_epochs", "patience", "seeds", "batch_size", "split", "lookback", "horizon",
                "variant"})) {
    const auto& t = j["train"];
    r.number(t, "train", "learning_rate", c.train.learning_rate);
    r.size(t, "train", "max_epochs", c.train.max_epochs);
    r.size(t, "train", "patience", c.train.patience);
    std::vector<std::size_t> seeds(c.train.seeds.begin(), c.train.seeds.end());
    r.sizes(t, "train", "seeds", seeds);
    c.train.seeds.assign(seeds.begin(), seeds.end());
    r.size(t, "train", "batch_size", c.train.batch_size);
    r.size(t, "train", "lookback", c.train.lookback);
    r.size(t, "train", "horizon", c.train.horizon);
    if (t.contains("split") && r.object(t["split"], "train.split", {"train", "validation", "test"})) {
      r.number(t["split"], "train.split", "train", c.train.split.train);
      r.number(t["split"], "train.split", "validation", c.train.split.validation);
      r.number(t["split"], "train.split", "test", c.train.split.test);
    }
    std::string variant = to_string(c.train.variant);
    r.string(t, "train", "variant", variant);
    if (const auto v = parse_variant(variant))
      c.train.variant = *v;
    else
      r.errors.push_back("train.variant: '" + variant + "' is not one of FULL, SEP, STP, DP-NTSA, SPET");
  }

  auto& m = c.model;
  if (j.contains("backbone") &&
      r.object(j["backbone"], "backbone", {"hidden_dim", "layers", "heads", "ff_dim", "max_seq_len", "seed"})) {
    const auto& b = j["backbone"];
    r.size(b, "backbone", "hidden_dim", m.backbone.hidden_dim);
    r.size(b, "backbone", "layers", m.backbone.layers);
    r.size(b, "backbone", "heads", m.backbone.heads);
    r.size(b, "backbone", "ff_dim", m.backbone.ff_dim);
    r.size(b, "backbone", "max_seq_len", m.backbone.max_seq_len);
    r.u64(b, "backbone", "seed", m.backbone.seed);
  }
  if (j.contains("patch") && r.object(j["patch"], "patch", {"patch_len", "stride"})) {
    r.size(j["patch"], "patch", "patch_len", m.patch_len);
    r.size(j["patch"], "patch", "stride", m.stride);
  }
  if (j.contains("prompt") &&
      r.object(j["prompt"], "prompt", {"summary_dim", "textual_dim", "textual_heads", "max_prompt_tokens", "vocab_size"})) {
    const auto& p = j["prompt"];
    r.size(p, "prompt", "summary_dim", m.prompt.summary_dim);
    r.size(p, "prompt", "textual_dim", m.prompt.textual_dim);
    r.size(p, "prompt", "textual_heads", m.prompt.textual_heads);
    r.size(p, "prompt", "max_prompt_tokens", m.prompt.max_prompt_tokens);
    r.size(p, "prompt", "vocab_size", m.prompt.vocab_size);
  }
  r.number(j, "", "revin_eps", m.revin_eps);

  m.lookback = c.train.lookback;
  m.horizon = c.train.horizon;
  m.variant = c.train.variant;

  // Semantic checks only make sense once every field parsed.
  if (r.errors.empty()) {
    for (const auto& v : c.train.violations()) r.errors.push_back("train: " + v);
    detail::collect(r.errors, [&] { m.patch_config().validate(); });
    detail::collect(r.errors, [&] { m.backbone.validate(); });
    detail::collect(r.errors, [&] {
      TextualPromptConfig{m.prompt.summary_dim, m.prompt.textual_dim, m.prompt.textual_heads, m.backbone.hidden_dim}
          .validate();
    });
    if (m.prompt.vocab_size < 2) r.errors.push_back("prompt.vocab_size: must be at least 2");
    if (m.prompt.max_prompt_tokens == 0) r.errors.push_back("prompt.max_prompt_tokens: must be positive");
    if (!(m.revin_eps > 0.0)) r.errors.push_back("revin_eps: must be positive");
    if (r.errors.empty()) detail::collect(r.errors, [&] { m.validate(); });
  }
  if (!r.errors.empty()) detail::fail_with("invalid configuration", r.errors);

  if (c.manifest.is_relative() && !base_dir.empty()) c.manifest = base_dir / c.manifest;
  if (c.output_dir.is_relative() && !base_dir.empty()) c.output_dir = base_dir / c.output_dir;
  return c;
}

inline RunConfigFile load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed configuration " + path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

/// Generator spec from JSON, with the same strictness as run configs.
inline GeneratorSpec parse_generator_spec(const nlohmann::json& j) {
  detail::StrictReader r;
  GeneratorSpec s;
  if (!r.object(j, "",
                {"id", "frequency", "description", "start_date", "length", "level", "trend_slope", "ar_coef",
                 "seasonal_period", "seasonal_amplitude", "noise_std", "event_rate", "event_impact", "event_decay",
                 "forced_events", "event_keywords", "neutral_phrases", "seed"}))
    detail::fail_with("invalid generator spec", r.errors);
  r.string(j, "", "id", s.id);
  r.string(j, "", "frequency", s.frequency);
  r.string(j, "", "description", s.description);
  r.string(j, "", "start_date", s.start_date);
  r.size(j, "", "length", s.length);
  r.number(j, "", "level", s.level);
  r.number(j, "", "trend_slope", s.trend_slope);
  r.number(j, "", "ar_coef", s.ar_coef);
  r.size(j, "", "seasonal_period", s.seasonal_period);
  r.number(j, "", "seasonal_amplitude", s.seasonal_amplitude);
  r.number(j, "", "noise_std", s.noise_std);
  r.number(j, "", "event_rate", s.event_rate);
  r.number(j, "", "event_impact", s.event_impact);
  r.size(j, "", "event_decay", s.event_decay);
  r.sizes(j, "", "forced_events", s.forced_events);
  r.strings(j, "", "event_keywords", s.event_keywords);
  r.strings(j, "", "neutral_phrases", s.neutral_phrases);
  r.u64(j, "", "seed", s.seed);
  if (r.errors.empty()) detail::collect(r.errors, [&] { s.validate(); });
  if (!r.errors.empty()) detail::fail_with("invalid generator spec", r.errors);
  return s;
}

}  // namespace dpmts
