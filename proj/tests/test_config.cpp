#include <gtest/gtest.h>

#include "dpmts/dpmts.hpp"

using namespace dpmts;
using nlohmann::json;

namespace {

json minimal() { return json{{"dataset", {{"manifest", "data/manifest.json"}}}}; }

std::string error_of(const json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(RunConfig, MinimalUsesDefaults) {
  const auto c = parse_run_config(minimal(), "/base");
  EXPECT_EQ(c.manifest, std::filesystem::path("/base/data/manifest.json"));
  EXPECT_EQ(c.output_dir, std::filesystem::path("/base/runs"));
  EXPECT_EQ(c.train.lookback, 15u);
  EXPECT_EQ(c.train.horizon, 7u);
  EXPECT_EQ(c.model.patch_config().num_patches(), 7u);
  EXPECT_EQ(c.train.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.model.variant, Variant::FULL);
}

TEST(RunConfig, FieldsAreRead) {
  json j = minimal();
  j["train"] = {{"learning_rate", 0.01}, {"variant", "DP-NTSA"}, {"lookback", 10}, {"seeds", {7}}};
  j["backbone"] = {{"layers", 1}};
  const auto c = parse_run_config(j);
  EXPECT_EQ(c.train.learning_rate, 0.01);
  EXPECT_EQ(c.model.variant, Variant::DP_NTSA);
  EXPECT_EQ(c.model.lookback, 10u);
  EXPECT_EQ(c.model.backbone.layers, 1u);
  EXPECT_EQ(c.train.seeds, (std::vector<std::uint64_t>{7}));
}

TEST(RunConfig, MissingManifestRejected) {
  EXPECT_NE(error_of(json::object()).find("dataset"), std::string::npos);
  EXPECT_NE(error_of(json{{"dataset", json::object()}}).find("dataset.manifest"), std::string::npos);
}

TEST(RunConfig, EveryProblemListedAtOnce) {
  json j = minimal();
  j["bogus"] = 1;
  j["train"] = {{"learning_rate", "fast"}, {"max_epochs", -3}, {"variant", "HALF"}, {"extra", true}};
  j["backbone"] = {{"heads", "two"}};
  const auto msg = error_of(j);
  for (const char* needle :
       {"bogus: unknown key", "train.learning_rate", "train.max_epochs", "train.variant", "train.extra", "backbone.heads"})
    EXPECT_NE(msg.find(needle), std::string::npos) << needle << "\n" << msg;
  EXPECT_NE(msg.find("6 problems"), std::string::npos) << msg;
}

TEST(RunConfig, SemanticErrorsReported) {
  json j = minimal();
  j["train"] = {{"patience", 30}, {"split", {{"train", 0.5}, {"validation", 0.2}, {"test", 0.2}}}};
  j["patch"] = {{"patch_len", 20}};
  const auto msg = error_of(j);
  EXPECT_NE(msg.find("patience"), std::string::npos) << msg;
  EXPECT_NE(msg.find("split"), std::string::npos) << msg;
  EXPECT_NE(msg.find("patch"), std::string::npos) << msg;
}

TEST(RunConfig, CapacityCheckedAgainstLongestSequence) {
  json j = minimal();
  j["backbone"] = {{"max_seq_len", 20}};
  EXPECT_NE(error_of(j).find("max_seq_len"), std::string::npos);
}

TEST(GeneratorConfig, StrictParsing) {
  const auto g = parse_generator_spec(json{{"id", "x"}, {"length", 30}, {"event_rate", 0.1}});
  EXPECT_EQ(g.id, "x");
  EXPECT_EQ(g.length, 30u);
  EXPECT_THROW(parse_generator_spec(json{{"lenght", 30}}), ConfigError);
  EXPECT_THROW(parse_generator_spec(json{{"event_rate", 1.5}}), ConfigError);
}

TEST(TrainConfig, ViolationsEnumerated) {
  TrainConfig t;
  t.max_epochs = 0;
  t.batch_size = 0;
  t.seeds.clear();
  EXPECT_GE(t.violations().size(), 3u);
  EXPECT_THROW(t.validate(), ConfigError);
}
