#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtsnn/config.hpp"

using namespace mtsnn;

TEST(Config, DefaultsResolve) {
  const RunConfig c = parse_run_config("");
  EXPECT_EQ(c.model.stages, presets::tiny_vgg().stages);
  EXPECT_EQ(c.train.milestones, (std::vector<Milestone>{{100, 0.1}}));
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_run_config("[model]\nstepz = 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.stepz"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownSectionIsNamed) {
  EXPECT_THROW(parse_run_config("[optim]\nlr = 1\n"), ConfigError);
}

TEST(Config, ValuesParse) {
  const RunConfig c = parse_run_config(
      "[model]\npreset = vgg9\nsteps = 4\nneuron = if\n[mt]\ndeltas = -0.3, 0.3\nscope = conv_only\n"
      "[train]\nlr_milestones = 30:0.1,60:0.1\nloss = mse\naugment = no\n[data]\ndataset = synth\n");
  EXPECT_EQ(c.model.stages, presets::vgg9().stages);
  EXPECT_EQ(c.model.steps, 4u);
  EXPECT_EQ(c.model.neuron, NeuronKind::IF);
  EXPECT_EQ(c.model.mt.deltas, (std::vector<double>{-0.3, 0.3}));
  EXPECT_EQ(c.model.mt.scope, MtScope::ConvOnly);
  EXPECT_EQ(c.train.milestones, (std::vector<Milestone>{{30, 0.1}, {60, 0.1}}));
  EXPECT_EQ(c.train.loss, LossKind::Mse);
  EXPECT_FALSE(c.train.augment);
  EXPECT_EQ(c.data.dataset, "synth");
}

TEST(Config, BadValuesAreUsageErrors) {
  EXPECT_THROW(parse_run_config("[model]\nsteps = three\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model]\nsteps = 0\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[mt]\ndeltas = 0.3,0.3\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model]\npreset = vgg99\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[data]\ndataset = imagenet\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\naugment = maybe\n"), ConfigError);
}

TEST(Config, SnapshotRoundTrips) {
  RunConfig c = parse_run_config("[model]\npreset = resnet20\n[mt]\ndeltas = -0.25\n[train]\nlr = 0.05\n");
  const std::string text = to_config_text(c);
  EXPECT_EQ(to_config_text(parse_run_config(text)), text);
  for (const std::string& key : known_config_keys()) {
    if (key == "model.preset") continue;
    const std::string leaf = key.substr(key.find('.') + 1);
    EXPECT_NE(text.find("\n" + leaf + " = "), std::string::npos) << key;
  }
}

TEST(Config, OverrideShowsInSnapshot) {
  ConfigEntries e = read_config_entries("[model]\nsteps = 1\n");
  set_entry(e, "model.steps", "3");
  const std::string text = to_config_text(resolve_config(e));
  EXPECT_NE(text.find("steps = 3\n"), std::string::npos);
  EXPECT_THROW(set_entry(e, "model.nope", "1"), ConfigError);
}

TEST(Config, PresetAppliesBeforeOtherKeys) {
  // Written after the stages key, the preset still does not override it.
  const RunConfig c = parse_run_config("[model]\nstages = 1x8\npreset = vgg8\nfc_widths = 16\n");
  EXPECT_EQ(c.model.stages, (std::vector<StageSpec>{{1, 8}}));
  EXPECT_EQ(c.model.fc_widths, (std::vector<std::size_t>{16}));
}

TEST(Config, NoDeltasSpellings) {
  for (const char* text : {"none", "[]", ""}) {
    const RunConfig c = parse_run_config(std::string("[mt]\ndeltas = ") + text + "\n");
    EXPECT_TRUE(c.model.mt.deltas.empty()) << text;
    EXPECT_EQ(to_config_text(parse_run_config(to_config_text(c))), to_config_text(c));
  }
}

TEST(Config, ShippedConfigsParse) {
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(std::string(MTSNN_SOURCE_DIR) + "/configs")) {
    std::ifstream in(entry.path());
    std::stringstream text;
    text << in.rdbuf();
    const RunConfig c = parse_run_config(text.str());
    EXPECT_NO_THROW(c.model.validate()) << entry.path();
    ++seen;
  }
  EXPECT_GE(seen, 6u);
}
