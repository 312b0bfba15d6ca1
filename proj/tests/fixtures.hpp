#pragma once

#include <memory>

#include "dpmts/dpmts.hpp"

namespace testing_support {

/// Small but complete model: every component present, cheap to run.
inline dpmts::ModelConfig small_model_config() {
  dpmts::ModelConfig c;
  c.lookback = 10;
  c.horizon = 3;
  c.patch_len = 4;
  c.stride = 2;
  c.backbone.hidden_dim = 8;
  c.backbone.layers = 1;
  c.backbone.heads = 2;
  c.backbone.ff_dim = 16;
  c.backbone.seed = 77;
  c.prompt.summary_dim = 8;
  c.prompt.textual_dim = 8;
  c.prompt.textual_heads = 2;
  c.prompt.max_prompt_tokens = 16;
  c.prompt.vocab_size = 64;
  c.backbone.max_seq_len = c.max_sequence();
  return c;
}

inline dpmts::GeneratorSpec small_event_spec() {
  dpmts::GeneratorSpec g;
  g.id = "small-events";
  g.length = 160;
  g.seasonal_amplitude = 2.0;
  g.noise_std = 0.2;
  g.event_rate = 0.1;
  g.event_impact = 4.0;
  g.event_decay = 3;
  g.seed = 5;
  return g;
}

struct Problem {
  dpmts::ModelConfig model_cfg;
  std::shared_ptr<dpmts::FrozenAssets> assets;
  std::vector<dpmts::TextedSeries> series;
  dpmts::PreparedSplits data;
};

inline Problem small_problem(const dpmts::GeneratorSpec& spec = small_event_spec()) {
  Problem p;
  p.model_cfg = small_model_config();
  p.assets = std::make_shared<dpmts::FrozenAssets>(p.model_cfg.prompt, p.model_cfg.backbone.hidden_dim,
                                                   p.model_cfg.backbone.seed);
  p.series = {dpmts::generate(spec)};
  p.data = dpmts::prepare_splits(p.series, p.model_cfg, dpmts::SplitRatio{}, p.assets);
  return p;
}

inline dpmts::TrainConfig small_train_config() {
  dpmts::TrainConfig t;
  t.learning_rate = 1e-2;
  t.max_epochs = 4;
  t.patience = 2;
  t.seeds = {1, 2};
  t.batch_size = 8;
  t.lookback = 10;
  t.horizon = 3;
  return t;
}

}  // namespace testing_support
