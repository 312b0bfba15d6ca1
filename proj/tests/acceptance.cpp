// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>

#include "dpmts/dpmts.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace dpmts;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  char timing[32];
  std::snprintf(timing, sizeof timing, " [%.1f s]", seconds_since(t0));
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " | " << o.detail << timing
            << std::endl;
  failures += !o.pass;
}

std::string fmt(double v, const char* f = "%.6g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int run_cli(const std::string& args, const fs::path& out_dir = {}) {
  std::string cmd;
  if (!out_dir.empty()) cmd += "DPMTS_OUTPUT_DIR='" + out_dir.string() + "' ";
  cmd += "'" + std::string(DPMTS_CLI_PATH) + "' " + args + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Workspace {
  fs::path root;
  fs::path config;
  RunConfigFile cfg;
};

/// Generates the suite and writes the acceptance configuration next to it.
Workspace prepare_workspace() {
  Workspace w;
  w.root = fs::absolute("acceptance-work");
  fs::remove_all(w.root);
  fs::create_directories(w.root);
  if (run_cli("generate --suite --out '" + (w.root / "data").string() + "'") != 0)
    throw std::runtime_error("dpmts generate --suite failed");
  json j = json::parse(read_text_file(fs::path(DPMTS_SOURCE_DIR) / "configs" / "acceptance.json"));
  j["dataset"]["manifest"] = (w.root / "data" / "manifest.json").string();
  j["output_dir"] = (w.root / "runs").string();
  w.config = w.root / "acceptance.json";
  write_text_file(w.config, j.dump(2) + "\n");
  w.cfg = load_run_config(w.config);
  return w;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string failed;
  for (const auto& e : run_gradcheck_suite()) {
    const double limit = e.name.rfind("end-to-end", 0) == 0 ? 1e-3 : 1e-4;
    worst = std::max(worst, e.max_rel_error);
    if (!(e.max_rel_error <= std::min(limit, e.threshold))) failed += " " + e.name;
  }
  const double secs = seconds_since(t0);
  return {failed.empty() && secs < 60.0,
          "worst rel err " + fmt(worst, "%.2e") + ", " + fmt(secs, "%.2f") + " s" +
              (failed.empty() ? "" : ", failed:" + failed)};
}

Outcome patch_count_law() {
  std::size_t cases = 0, bad = 0;
  for (std::size_t L = 1; L <= 64; ++L)
    for (std::size_t lp = 1; lp <= L; ++lp)
      for (std::size_t s = 1; s <= lp; ++s) {
        const PatchConfig pc{lp, s, L};
        const std::vector<double> w(L, 0.5);
        const std::size_t got = patchify(w, pc).size();
        bad += got != (L - lp) / s + 2 || pc.num_patches() != got;
        ++cases;
      }
  const std::size_t p7 = PatchConfig{4, 2, 15}.num_patches();
  return {bad == 0 && p7 == 7, std::to_string(cases) + " cases, " + std::to_string(bad) + " mismatches, P(15,4,2)=" +
                                   std::to_string(p7)};
}

Outcome textual_oracle() {
  Rng rng(2718);
  TextualPrompt block({6, 8, 2, 5}, rng);
  const Tensor s = Tensor::uniform({3, 6}, 1.0, rng);
  const Tensor out = block.forward(s);
  const auto want = testing_support::scalar_textual_prompt(testing_support::to_mat(s), block);
  double err = 0.0, row_err = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t d = 0; d < 5; ++d) err = std::max(err, std::abs(out.at(i, d) - want[i][d]));
  for (const auto& w : block.attention_weights(s))
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < w.cols(); ++c) total += w.at(r, c);
      row_err = std::max(row_err, std::abs(total - 1.0));
    }
  return {err <= 1e-10 && row_err <= 1e-12,
          "max |diff| " + fmt(err, "%.2e") + ", max |row sum - 1| " + fmt(row_err, "%.2e")};
}

Outcome freeze_contract(const Workspace& w) {
  auto mc = w.cfg.model;
  mc.variant = Variant::FULL;
  auto tc = w.cfg.train;
  tc.variant = Variant::FULL;
  tc.max_epochs = 20;
  tc.patience = 19;
  tc.seeds = {tc.seeds.front()};
  auto assets = std::make_shared<FrozenAssets>(mc.prompt, mc.backbone.hidden_dim, mc.backbone.seed);
  const auto series = load_dataset(w.cfg.manifest, {"event-signal"});
  const auto data = prepare_splits(series, mc, tc.split, assets);
  ForecastModel model(mc, tc.seeds.front(), assets);
  const auto before = frozen_checksums(model);
  const auto run = train(model, data, tc, tc.seeds.front());
  const auto after = frozen_checksums(model);
  std::size_t changed = 0;
  for (const auto& [name, sum] : before) changed += after.at(name) != sum;
  const bool ok = run.epochs_run == 20 && changed == 0 && run.params_without_gradient.empty();
  return {ok, std::to_string(before.size()) + " frozen tensors, " + std::to_string(changed) + " changed; " +
                  std::to_string(model.trainable_parameters().size()) + " trainable, " +
                  std::to_string(run.params_without_gradient.size()) + " without gradient; " +
                  std::to_string(run.epochs_run) + " epochs"};
}

Outcome revin_round_trip() {
  Rng rng(31337);
  RevIN revin;
  revin.gamma().tensor.mutable_data()[0] = 1.3;
  revin.beta().tensor.mutable_data()[0] = -0.4;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(15);
    if (trial == 0) {
      std::fill(x.begin(), x.end(), -7.25);
    } else {
      const double level = rng.uniform(-100, 100), spread = rng.uniform(0.001, 30);
      for (auto& v : x) v = level + spread * rng.normal();
    }
    RevINState st;
    const auto back = revin.denormalize_values(revin.normalize_values(x, st), st);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
  }
  return {worst <= 1e-9, "100 windows, max |error| " + fmt(worst, "%.2e")};
}

struct AblationRun {
  json report;
  double seconds = 0.0;
  bool identical = false;
};

AblationRun ablate_twice(const Workspace& w) {
  AblationRun a;
  const auto t0 = Clock::now();
  const fs::path first = w.root / "ablate-1", second = w.root / "ablate-2";
  if (run_cli("ablate --config '" + w.config.string() + "'", first) != 0) throw std::runtime_error("first ablate failed");
  a.seconds = seconds_since(t0);
  if (run_cli("ablate --config '" + w.config.string() + "'", second) != 0)
    throw std::runtime_error("second ablate failed");
  const std::string j1 = read_text_file(first / "ablation.json"), j2 = read_text_file(second / "ablation.json");
  const std::string t1 = read_text_file(first / "ablation.txt"), t2 = read_text_file(second / "ablation.txt");
  a.identical = j1 == j2 && t1 == t2;
  a.report = json::parse(j1);
  return a;
}

double mean_mse(const json& report, const std::string& variant) {
  for (const auto& row : report["table"])
    if (row["variant"] == variant) return row["mean_mse"].get<double>();
  throw std::runtime_error("variant " + variant + " missing from ablation report");
}

Outcome ablation_direction(const AblationRun& a) {
  const double full = mean_mse(a.report, "FULL"), sep = mean_mse(a.report, "SEP"), ntsa = mean_mse(a.report, "DP-NTSA");
  const bool ok = full < sep && ntsa > full && a.seconds < 15 * 60;
  std::string table;
  for (const auto& row : a.report["table"]) table += " " + row["variant"].get<std::string>() + "=" + fmt(row["mean_mse"]);
  return {ok, "MSE" + table + "; ablation took " + fmt(a.seconds, "%.0f") + " s"};
}

Outcome lookback_trend(const Workspace& w) {
  const fs::path out = w.root / "sweep";
  if (run_cli("sweep-lookback --config '" + w.config.string() + "' --lookbacks 5,15", out) != 0)
    throw std::runtime_error("sweep-lookback failed");
  const json j = json::parse(read_text_file(out / "sweep.json"));
  double m5 = NAN, m15 = NAN;
  for (const auto& r : j["rows"]) {
    if (r["lookback"] == 5) m5 = r["mean_mse"].get<double>();
    if (r["lookback"] == 15) m15 = r["mean_mse"].get<double>();
  }
  return {m15 <= m5, "MSE(L=15) " + fmt(m15) + ", MSE(L=5) " + fmt(m5)};
}

/// First epoch after which validation has failed to strictly improve on its
/// running best for `patience` epochs in a row; 0 when that never happens.
std::size_t oracle_stop_epoch(const std::vector<double>& val, std::size_t patience) {
  double best = INFINITY;
  std::size_t stale = 0;
  for (std::size_t e = 0; e < val.size(); ++e) {
    if (val[e] < best) {
      best = val[e];
      stale = 0;
    } else if (++stale == patience) {
      return e + 1;
    }
  }
  return 0;
}

Outcome protocol_fidelity(const AblationRun& a, const Workspace& w) {
  std::vector<std::string> problems;
  const auto seg = chronological_split(100, SplitRatio{}, 5, 2);
  if (seg[0].end != 70 || seg[1].begin != 70 || seg[1].end != 90 || seg[2].begin != 90 || seg[2].end != 100)
    problems.push_back("split of 100 is not 70/20/10");

  EarlyStopping stop(3);
  std::size_t halted = 0;
  const std::vector<double> val = {5.0, 4.0, 4.1, 4.2, 4.3, 3.0};
  for (std::size_t e = 1; e <= val.size() && !halted; ++e) {
    stop.update(e, val[e - 1]);
    if (stop.should_stop()) halted = e;
  }
  if (halted != 5 || stop.best_epoch() != 2) problems.push_back("early stopping example did not halt at epoch 5");

  std::size_t seeds = 0, stops = 0;
  const std::size_t patience = w.cfg.train.patience, max_epochs = w.cfg.train.max_epochs;
  for (const auto& variant : a.report["runs"]) {
    double sum = 0.0;
    const auto& runs = variant["seeds"];
    for (const auto& r : runs) {
      sum += r["test"]["mse"].get<double>();
      const auto curve = r["val_curve"].get<std::vector<double>>();
      const std::size_t expect = oracle_stop_epoch(curve, patience);
      const std::size_t ran = r["epochs_run"].get<std::size_t>();
      const bool consistent = expect ? ran == expect : ran == max_epochs;
      if (!consistent) problems.push_back(variant["variant"].get<std::string>() + " seed halted at " + std::to_string(ran));
      stops += r["stopped_early"].get<bool>();
      ++seeds;
    }
    if (runs.size() != 3) problems.push_back("expected 3 seeds");
    if (variant["mean_mse"].get<double>() != sum / static_cast<double>(runs.size()))
      problems.push_back(variant["variant"].get<std::string>() + " mean is not the seed average");
  }
  std::string detail = "split 70/20/10, " + std::to_string(seeds) + " seed runs checked (" + std::to_string(stops) +
                       " stopped early), means exact";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

Outcome determinism_and_persistence(const AblationRun& a, const Workspace& w) {
  const fs::path out = w.root / "persist";
  fs::create_directories(out);
  auto mc = w.cfg.model;
  auto assets = std::make_shared<FrozenAssets>(mc.prompt, mc.backbone.hidden_dim, mc.backbone.seed);
  const auto series = load_dataset(w.cfg.manifest, {"event-signal"});
  const auto data = prepare_splits(series, mc, w.cfg.train.split, assets);
  auto tc = w.cfg.train;
  tc.max_epochs = 3;
  tc.patience = 2;
  ForecastModel model(mc, tc.seeds.front(), assets);
  train(model, data, tc, tc.seeds.front());
  const auto path = (out / "checkpoint.json").string();
  save_checkpoint(model, path);
  const ForecastModel loaded = load_checkpoint(path);
  const auto p1 = predict_all(model, data.test), p2 = predict_all(loaded, data.test);
  const bool same_predictions = p1 == p2;
  return {a.identical && same_predictions,
          std::string("ablate reruns ") + (a.identical ? "byte-identical" : "DIFFER") + ", reload predictions " +
              (same_predictions ? "bit-exact" : "DIFFER") + " over " + std::to_string(p1.size()) + " windows"};
}

}  // namespace

int main() {
  std::cout << "acceptance suite" << std::endl;
  report(1, "finite-difference gradient suite", gradient_suite);
  report(2, "patch count law", patch_count_law);
  report(3, "textual prompt scalar oracle", textual_oracle);

  Workspace w;
  try {
    w = prepare_workspace();
  } catch (const std::exception& e) {
    const auto missing = [&] { return Outcome{false, e.what()}; };
    report(4, "needs generated workspace", missing);
    report(5, "RevIN round trip", revin_round_trip);
    for (int id : {6, 7, 8, 9}) report(id, "needs generated workspace", missing);
    std::cout << failures << " criteria failed" << std::endl;
    return 1;
  }
  report(4, "freeze contract over a 20-epoch run", [&] { return freeze_contract(w); });
  report(5, "RevIN round trip", revin_round_trip);

  AblationRun ablation;
  std::string ablation_error;
  try {
    ablation = ablate_twice(w);
  } catch (const std::exception& e) {
    ablation_error = e.what();
  }
  const auto need_ablation = [&](const std::function<Outcome()>& f) {
    return [&, f] { return ablation_error.empty() ? f() : Outcome{false, ablation_error}; };
  };
  report(6, "ablation direction on event-signal", need_ablation([&] { return ablation_direction(ablation); }));
  report(7, "lookback 15 no worse than lookback 5", [&] { return lookback_trend(w); });
  report(8, "protocol fidelity", need_ablation([&] { return protocol_fidelity(ablation, w); }));
  report(9, "determinism and persistence", need_ablation([&] { return determinism_and_persistence(ablation, w); }));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + (failures == 1 ? " criterion failed" : " criteria failed")) << std::endl;
  return failures == 0 ? 0 : 1;
}
