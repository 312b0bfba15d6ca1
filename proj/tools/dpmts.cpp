// dpmts: dataset generation, training, evaluation, ablation, lookback sweep
// and gradient checking from the command line.
//
// Exit codes: 0 success, 1 validation or configuration error, 2 runtime error
// (I/O, divergence, failed gradient checks).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dpmts/config.hpp"
#include "dpmts/dpmts.hpp"
#include "dpmts/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using namespace dpmts;

namespace {

constexpr const char* kOutputEnv = "DPMTS_OUTPUT_DIR";

fs::path output_dir(const fs::path& configured) {
  if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
  return configured;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct LoadedRun {
  RunConfigFile cfg;
  std::vector<TextedSeries> series;
  fs::path out;
};

LoadedRun load_run(const std::string& config_path) {
  LoadedRun r;
  r.cfg = load_run_config(config_path);
  r.series = load_dataset(r.cfg.manifest, r.cfg.series);
  r.out = output_dir(r.cfg.output_dir);
  return r;
}

std::string predictions_csv(const ForecastModel& model, const std::vector<PreparedWindow>& windows) {
  std::ostringstream os;
  os << "series,window_start,horizon_step,prediction,target\n";
  const auto preds = predict_all(model, windows);
  for (std::size_t i = 0; i < windows.size(); ++i)
    for (std::size_t h = 0; h < windows[i].targets.size(); ++h)
      os << windows[i].series_id << ',' << windows[i].start_timestamp << ',' << h + 1 << ',' << fmt(preds[i][h]) << ','
         << fmt(windows[i].targets[h]) << '\n';
  return os.str();
}

int cmd_generate(bool suite, const std::string& spec_path, const std::string& out_flag) {
  const fs::path out = output_dir(out_flag);
  std::vector<TextedSeries> series;
  if (suite) {
    for (const auto& g : generate_suite()) series.push_back(g.series);
  } else {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(spec_path));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed generator spec " + spec_path + ": " + e.what());
    }
    if (j.is_array()) {
      for (const auto& s : j) series.push_back(generate(parse_generator_spec(s)));
    } else {
      series.push_back(generate(parse_generator_spec(j)));
    }
  }
  write_dataset(out, series);
  std::cout << "wrote " << series.size() << " series and manifest.json to " << out.string() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  auto run = load_run(config_path);
  auto& c = run.cfg;
  auto assets = std::make_shared<FrozenAssets>(c.model.prompt, c.model.backbone.hidden_dim, c.model.backbone.seed);
  const auto data = prepare_splits(run.series, c.model, c.train.split, assets);
  fs::create_directories(run.out);
  const auto report = run_seeds(c.model, c.train, data, assets, [&](const SeedRun& s, const ForecastModel& model) {
    const std::string tag = "seed" + std::to_string(s.seed);
    save_checkpoint(model, (run.out / ("checkpoint-" + tag + ".json")).string());
    if (c.save_predictions) write_text_file(run.out / ("predictions-" + tag + ".csv"), predictions_csv(model, data.test));
    std::cout << "seed " << s.seed << ": best epoch " << s.best_epoch << " of " << s.epochs_run << ", test MSE "
              << fmt(s.test.mse) << ", MAE " << fmt(s.test.mae) << "\n";
  });
  auto j = to_json(report);
  j["train_config"] = to_json(c.train);
  write_json(run.out / "report.json", j);
  std::cout << "mean test MSE " << fmt(report.mean_mse) << ", MAE " << fmt(report.mean_mae) << "\n"
            << "report: " << (run.out / "report.json").string() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint) {
  auto run = load_run(config_path);
  const ForecastModel model = load_checkpoint(checkpoint);
  const auto data = prepare_splits(run.series, model.config(), run.cfg.train.split, model.shared_assets());
  const Metrics m = evaluate(model, data.test);
  const nlohmann::json j{{"checkpoint", checkpoint},
                         {"variant", to_string(model.variant())},
                         {"run_seed", model.run_seed()},
                         {"test", to_json(m)},
                         {"windows", data.test.size()}};
  fs::create_directories(run.out);
  write_json(run.out / ("evaluation-seed" + std::to_string(model.run_seed()) + ".json"), j);
  if (run.cfg.save_predictions)
    write_text_file(run.out / ("evaluation-predictions-seed" + std::to_string(model.run_seed()) + ".csv"),
                    predictions_csv(model, data.test));
  std::cout << "test MSE " << fmt(m.mse) << ", MAE " << fmt(m.mae) << " over " << data.test.size() << " windows\n";
  return 0;
}

int cmd_ablate(const std::string& config_path) {
  auto run = load_run(config_path);
  const auto report = run_ablation(run.series, run.cfg.model, run.cfg.train);
  auto j = to_json(report);
  j["train_config"] = to_json(run.cfg.train);
  fs::create_directories(run.out);
  write_json(run.out / "ablation.json", j);
  const std::string table = ablation_table(report);
  write_text_file(run.out / "ablation.txt", table);
  std::cout << table;
  return 0;
}

std::vector<std::size_t> parse_lookbacks(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  std::vector<std::string> bad;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    try {
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      bad.push_back("'" + item + "'");
    }
  }
  if (!bad.empty() || out.empty()) {
    std::string msg = "--lookbacks needs a comma-separated list of positive integers";
    for (const auto& b : bad) msg += "; bad entry " + b;
    throw ConfigError(msg);
  }
  return out;
}

int cmd_sweep(const std::string& config_path, const std::string& lookbacks) {
  const auto ls = parse_lookbacks(lookbacks);
  auto run = load_run(config_path);
  const auto rows = sweep_lookback(run.series, run.cfg.model, run.cfg.train, ls);
  nlohmann::json j = nlohmann::json::array();
  std::string csv = "lookback,mean_mse,mean_mae\n";
  for (const auto& r : rows) {
    j.push_back({{"lookback", r.lookback}, {"mean_mse", r.mean_mse}, {"mean_mae", r.mean_mae}});
    csv += std::to_string(r.lookback) + "," + fmt(r.mean_mse) + "," + fmt(r.mean_mae) + "\n";
  }
  fs::create_directories(run.out);
  write_json(run.out / "sweep.json", {{"horizon", run.cfg.train.horizon}, {"rows", j}});
  write_text_file(run.out / "sweep.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_gradcheck() {
  bool ok = true;
  for (const auto& e : run_gradcheck_suite()) {
    ok = ok && e.passed();
    std::printf("%-4s %-40s max rel err %.3e (threshold %.0e, %zu entries)\n", e.passed() ? "PASS" : "FAIL",
                e.name.c_str(), e.max_rel_error, e.threshold, e.entries);
    if (!e.passed()) std::printf("     worst: %s\n", e.worst.c_str());
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-prompt multimodal time-series forecasting"};
  app.require_subcommand(1);

  bool suite = false;
  std::string spec, gen_out = "data";
  auto* gen = app.add_subcommand("generate", "Write synthetic JSONL datasets and a manifest");
  auto* suite_opt = gen->add_flag("--suite", suite, "Generate the four canonical datasets");
  gen->add_option("--spec", spec, "Generator spec JSON (one object or an array)")->excludes(suite_opt);
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();

  std::string config, checkpoint, lookbacks;
  auto* train = app.add_subcommand("train", "Train every configured seed");
  train->add_option("--config", config, "Run configuration JSON")->required();
  auto* eval = app.add_subcommand("evaluate", "Test metrics of a saved checkpoint");
  eval->add_option("--config", config, "Run configuration JSON")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
  auto* ablate = app.add_subcommand("ablate", "Train FULL, SEP, STP, DP-NTSA and SPET");
  ablate->add_option("--config", config, "Run configuration JSON")->required();
  auto* sweep = app.add_subcommand("sweep-lookback", "Train FULL at several lookbacks");
  sweep->add_option("--config", config, "Run configuration JSON")->required();
  sweep->add_option("--lookbacks", lookbacks, "Comma-separated lookbacks, e.g. 5,10,15")->required();
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable block");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      if (!suite && spec.empty()) throw ConfigError("generate needs --suite or --spec");
      return cmd_generate(suite, spec, gen_out);
    }
    if (*train) return cmd_train(config);
    if (*eval) return cmd_evaluate(config, checkpoint);
    if (*ablate) return cmd_ablate(config);
    if (*sweep) return cmd_sweep(config, lookbacks);
    if (*grad) return cmd_gradcheck();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InsufficientDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const AlignmentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
