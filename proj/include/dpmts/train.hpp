#pragma once

// Training protocol: chronological 7:2:1 splits, seeded shuffled mini-batch
// Adam on the denormalized MSE, early stopping on validation MSE with best
// snapshot restore, seed averaging, and the ablation / lookback studies.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "dpmts/data.hpp"
#include "dpmts/model.hpp"
#include "dpmts/optim.hpp"
#include "json.hpp"

namespace dpmts {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t batch_size = 16;
  SplitRatio split;
  std::size_t lookback = 15;
  std::size_t horizon = 7;
  Variant variant = Variant::FULL;

  /// Every violated constraint, one message each.
  std::vector<std::string> violations() const {
    std::vector<std::string> bad;
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad.push_back("learning_rate must be finite and >= 0");
    if (max_epochs == 0) bad.push_back("max_epochs must be positive");
    if (patience == 0 || patience >= max_epochs) bad.push_back("patience must be positive and below max_epochs");
    if (seeds.empty()) bad.push_back("seeds must list at least one seed");
    if (batch_size == 0) bad.push_back("batch_size must be positive");
    if (split.train <= 0.0 || split.validation <= 0.0 || split.test <= 0.0 ||
        std::abs(split.train + split.validation + split.test - 1.0) > 1e-9)
      bad.push_back("split fractions must be positive and sum to 1");
    if (lookback < 2) bad.push_back("lookback must be at least 2");
    if (horizon == 0) bad.push_back("horizon must be positive");
    return bad;
  }

  void validate() const {
    const auto bad = violations();
    if (bad.empty()) return;
    std::string msg = "invalid training configuration:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
};

/// Stops after `patience` consecutive epochs without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records an epoch's validation loss; true when it is a new best.
  bool update(std::size_t epoch, double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
};

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

/// Denormalized predictions for every window, in order.
inline std::vector<std::vector<double>> predict_all(const ForecastModel& model, const std::vector<PreparedWindow>& windows) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(model.predict(w).to_vector());
  return out;
}

/// Mean squared and absolute error over all windows and horizon steps.
inline Metrics evaluate(const ForecastModel& model, const std::vector<PreparedWindow>& windows) {
  if (windows.empty()) throw ContractViolation("evaluate needs at least one window");
  NoGradGuard no_grad;
  double se = 0.0, ae = 0.0;
  std::size_t count = 0;
  for (const auto& w : windows) {
    const Tensor pred = model.predict(w);
    for (std::size_t h = 0; h < w.targets.size(); ++h) {
      const double d = pred[h] - w.targets[h];
      se += d * d;
      ae += std::abs(d);
      ++count;
    }
  }
  return {se / static_cast<double>(count), ae / static_cast<double>(count)};
}

struct PreparedSplits {
  std::vector<PreparedWindow> train;
  std::vector<PreparedWindow> validation;
  std::vector<PreparedWindow> test;
  /// Per series: index of its first test observation.
  std::vector<std::pair<std::string, std::size_t>> test_begin;
};

/// Splits each series chronologically and prepares stride-1 windows
/// strictly inside each segment.
inline PreparedSplits prepare_splits(const std::vector<TextedSeries>& series, const ModelConfig& cfg,
                                     const SplitRatio& ratio, std::shared_ptr<const FrozenAssets> assets) {
  if (series.empty()) throw InsufficientDataError("no series to train on");
  PreparedSplits out;
  WindowPreparer preparer(std::move(assets), cfg);
  for (const auto& s : series) {
    const auto seg = chronological_split(s.size(), ratio, cfg.lookback, cfg.horizon);
    for (const auto& w : make_windows(s, seg[0], cfg.lookback, cfg.horizon)) out.train.push_back(preparer.prepare(w, s));
    for (const auto& w : make_windows(s, seg[1], cfg.lookback, cfg.horizon))
      out.validation.push_back(preparer.prepare(w, s));
    for (const auto& w : make_windows(s, seg[2], cfg.lookback, cfg.horizon)) out.test.push_back(preparer.prepare(w, s));
    out.test_begin.emplace_back(s.id, seg[2].begin);
  }
  return out;
}

struct SeedRun {
  std::uint64_t seed = 0;
  double initial_train_mse = 0.0;
  std::vector<double> train_curve;  // mean per-window training loss of each epoch
  std::vector<double> val_curve;    // validation MSE after each epoch
  std::size_t best_epoch = 0;       // 1-based
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  Metrics test;
  std::uint64_t order_digest = 0;  // hash of every epoch's window order
  std::vector<std::string> params_without_gradient;
};

inline std::vector<std::vector<double>> snapshot(const std::vector<Parameter*>& params) {
  std::vector<std::vector<double>> out;
  for (const Parameter* p : params) out.emplace_back(p->tensor.data().begin(), p->tensor.data().end());
  return out;
}

inline void restore(const std::vector<Parameter*>& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto d = params[i]->tensor.mutable_data();
    std::copy(values[i].begin(), values[i].end(), d.begin());
  }
}

/// One seed: trains `model` in place and leaves the best-validation weights in it.
inline SeedRun train(ForecastModel& model, const PreparedSplits& data, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (data.train.empty() || data.validation.empty() || data.test.empty())
    throw ContractViolation("train needs nonempty train, validation and test windows");
  const auto params = model.trainable_parameters();
  Adam adam(AdamOptions{cfg.learning_rate});
  Rng order_rng = Rng::stream(seed, 0x0bde7);
  EarlyStopping stopper(cfg.patience);

  SeedRun run;
  run.seed = seed;
  run.initial_train_mse = evaluate(model, data.train).mse;
  std::vector<bool> saw_gradient(params.size(), false);
  auto best = snapshot(params);
  std::uint64_t digest = 0xcbf29ce484222325ULL;

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    for (auto i : order) digest = (digest ^ i) * 0x100000001b3ULL;

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      zero_grad(params);
      Tensor total;
      for (std::size_t k = b; k < end; ++k) {
        const auto& w = data.train[order[k]];
        const Tensor loss = mse_loss(model.predict(w), Tensor::vector(w.targets));
        epoch_loss += loss.item();
        total = total.defined() ? add(total, loss) : loss;
      }
      const Tensor batch_loss = scale(total, 1.0 / static_cast<double>(end - b));
      if (!std::isfinite(batch_loss.item()))
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
      backward(batch_loss);
      for (std::size_t p = 0; p < params.size(); ++p)
        if (!saw_gradient[p])
          for (double g : params[p]->tensor.grad())
            if (g != 0.0) {
              saw_gradient[p] = true;
              break;
            }
      adam.step(params);
    }
    run.train_curve.push_back(epoch_loss / static_cast<double>(order.size()));
    const double val = evaluate(model, data.validation).mse;
    if (!std::isfinite(val)) throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    run.val_curve.push_back(val);
    run.epochs_run = epoch;
    if (stopper.update(epoch, val)) best = snapshot(params);
    if (stopper.should_stop()) {
      run.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  zero_grad(params);
  restore(params, best);
  run.best_epoch = stopper.best_epoch();
  run.order_digest = digest;
  for (std::size_t p = 0; p < params.size(); ++p)
    if (!saw_gradient[p]) run.params_without_gradient.push_back(params[p]->name);
  run.test = evaluate(model, data.test);
  return run;
}

struct RunReport {
  Variant variant = Variant::FULL;
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  std::vector<SeedRun> runs;
  double mean_mse = 0.0;
  double mean_mae = 0.0;
  std::string prompt_sample;
  nlohmann::json config;
};

inline void average_metrics(RunReport& report) {
  double mse = 0.0, mae = 0.0;
  for (const auto& r : report.runs) {
    mse += r.test.mse;
    mae += r.test.mae;
  }
  report.mean_mse = mse / static_cast<double>(report.runs.size());
  report.mean_mae = mae / static_cast<double>(report.runs.size());
}

/// Called after each seed finishes, with its best-validation model.
using SeedCallback = std::function<void(const SeedRun&, const ForecastModel&)>;

/// Trains a fresh model per seed on shared prepared data and averages test metrics.
inline RunReport run_seeds(const ModelConfig& model_cfg, const TrainConfig& cfg, const PreparedSplits& data,
                           std::shared_ptr<FrozenAssets> assets, const SeedCallback& on_seed = {}) {
  cfg.validate();
  RunReport report;
  report.variant = model_cfg.variant;
  report.lookback = model_cfg.lookback;
  report.horizon = model_cfg.horizon;
  report.prompt_sample = data.test.front().prompt;
  report.config = to_json(model_cfg);
  for (auto seed : cfg.seeds) {
    ForecastModel model(model_cfg, seed, assets);
    report.runs.push_back(train(model, data, cfg, seed));
    if (on_seed) on_seed(report.runs.back(), model);
  }
  average_metrics(report);
  return report;
}

inline nlohmann::json to_json(const Metrics& m) { return {{"mse", m.mse}, {"mae", m.mae}}; }

inline nlohmann::json to_json(const SeedRun& r) {
  return {{"seed", r.seed},
          {"initial_train_mse", r.initial_train_mse},
          {"train_curve", r.train_curve},
          {"val_curve", r.val_curve},
          {"best_epoch", r.best_epoch},
          {"epochs_run", r.epochs_run},
          {"stopped_early", r.stopped_early},
          {"test", to_json(r.test)},
          {"order_digest", r.order_digest},
          {"params_without_gradient", r.params_without_gradient}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seeds", c.seeds},
          {"batch_size", c.batch_size},
          {"split", {c.split.train, c.split.validation, c.split.test}},
          {"lookback", c.lookback},
          {"horizon", c.horizon},
          {"variant", to_string(c.variant)}};
}

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& s : r.runs) runs.push_back(to_json(s));
  return {{"variant", to_string(r.variant)},
          {"lookback", r.lookback},
          {"horizon", r.horizon},
          {"seeds", runs},
          {"mean_mse", r.mean_mse},
          {"mean_mae", r.mean_mae},
          {"explicit_prompt_sample", r.prompt_sample},
          {"model_config", r.config}};
}

// ---- studies ----

struct AblationReport {
  std::vector<RunReport> variants;  // FULL, SEP, STP, DP-NTSA, SPET
};

/// Trains every variant with identical seeds, data and hyperparameters.
inline AblationReport run_ablation(const std::vector<TextedSeries>& series, ModelConfig model_cfg, TrainConfig cfg) {
  cfg.validate();
  model_cfg.lookback = cfg.lookback;
  model_cfg.horizon = cfg.horizon;
  auto assets = std::make_shared<FrozenAssets>(model_cfg.prompt, model_cfg.backbone.hidden_dim, model_cfg.backbone.seed);
  const auto data = prepare_splits(series, model_cfg, cfg.split, assets);
  AblationReport out;
  for (auto v : kAllVariants) {
    model_cfg.variant = v;
    cfg.variant = v;
    out.variants.push_back(run_seeds(model_cfg, cfg, data, assets));
  }
  return out;
}

inline nlohmann::json to_json(const AblationReport& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : a.variants)
    rows.push_back({{"variant", to_string(r.variant)}, {"mean_mse", r.mean_mse}, {"mean_mae", r.mean_mae}});
  nlohmann::json detail = nlohmann::json::array();
  for (const auto& r : a.variants) detail.push_back(to_json(r));
  return {{"table", rows}, {"runs", detail}};
}

/// Plain-text table: one column per variant, MSE and MAE rows.
inline std::string ablation_table(const AblationReport& a) {
  const auto cell = [](const std::string& s) {
    std::string out = s;
    if (out.size() < 10) out.insert(0, 10 - out.size(), ' ');
    return out;
  };
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  std::string header = cell("Metric"), mse = cell("MSE"), mae = cell("MAE");
  for (const auto& r : a.variants) {
    header += " " + cell(to_string(r.variant));
    mse += " " + cell(num(r.mean_mse));
    mae += " " + cell(num(r.mean_mae));
  }
  return header + "\n" + mse + "\n" + mae + "\n";
}

struct SweepRow {
  std::size_t lookback = 0;
  double mean_mse = 0.0;
  double mean_mae = 0.0;
};

/// FULL model at each lookback (ascending), identical seeds.
inline std::vector<SweepRow> sweep_lookback(const std::vector<TextedSeries>& series, ModelConfig model_cfg,
                                            TrainConfig cfg, std::vector<std::size_t> lookbacks) {
  if (lookbacks.empty()) throw ConfigError("lookback sweep needs at least one lookback");
  std::sort(lookbacks.begin(), lookbacks.end());
  lookbacks.erase(std::unique(lookbacks.begin(), lookbacks.end()), lookbacks.end());
  for (auto l : lookbacks)
    if (l < model_cfg.patch_len + 1)
      throw ConfigError("lookback " + std::to_string(l) + " is below patch_len + 1 = " +
                        std::to_string(model_cfg.patch_len + 1));
  auto assets = std::make_shared<FrozenAssets>(model_cfg.prompt, model_cfg.backbone.hidden_dim, model_cfg.backbone.seed);
  model_cfg.variant = Variant::FULL;
  cfg.variant = Variant::FULL;
  model_cfg.horizon = cfg.horizon;
  std::vector<SweepRow> rows;
  for (auto l : lookbacks) {
    model_cfg.lookback = l;
    cfg.lookback = l;
    const auto data = prepare_splits(series, model_cfg, cfg.split, assets);
    const auto report = run_seeds(model_cfg, cfg, data, assets);
    rows.push_back({l, report.mean_mse, report.mean_mae});
  }
  return rows;
}

}  // namespace dpmts
