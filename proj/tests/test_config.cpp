#include <doctest.h>

#include "ctrlgen/config.hpp"
#include "ctrlgen/grid.hpp"

using namespace ctrlgen;

TEST_CASE("config map parsing") {
  ConfigMap map = ConfigMap::parse_string(
      "# comment\n"
      "top = 1\n"
      "[experiment]\n"
      "task = length   ; trailing comment is part of the value, quotes are not\n"
      "name = \"quoted value\"\n"
      "\n"
      "[train]\n"
      "lr = 5e-4\n");
  CHECK(map.get_int("top", 0) == 1);
  // Everything after '=' is the value; inline ';' does not start a comment.
  CHECK(map.get_str("experiment.task", "") != "length");
  CHECK(map.get_str("experiment.task", "").rfind("length", 0) == 0);
  CHECK(map.get_str("experiment.name", "") == "quoted value");
  CHECK(map.get_double("train.lr", 0) == doctest::Approx(5e-4));
}

TEST_CASE("config map rejects malformed lines and wrong types") {
  CHECK_THROWS_AS(ConfigMap::parse_string("[oops\n"), ConfigError);
  CHECK_THROWS_AS(ConfigMap::parse_string("just a line\n"), ConfigError);
  CHECK_THROWS_AS(ConfigMap::parse_string("= value\n"), ConfigError);

  ConfigMap map = ConfigMap::parse_string("a = 3x\nb = maybe\nc = 1.5\n");
  CHECK_THROWS_AS(map.get_int("a", 0), ConfigError);
  CHECK_THROWS_AS(map.get_bool("b", false), ConfigError);
  CHECK_THROWS_AS(map.get_int("c", 0), ConfigError);
  CHECK(map.get_double("c", 0) == doctest::Approx(1.5));
}

TEST_CASE("config map tracks unread keys") {
  ConfigMap map = ConfigMap::parse_string("used = 1\nunused = 2\n");
  map.get_int("used", 0);
  auto unread = map.unread_keys();
  REQUIRE(unread.size() == 1);
  CHECK(unread[0] == "unused");
}

TEST_CASE("range lists parse with and without brackets") {
  ConfigMap map = ConfigMap::parse_string("a = [3..12, 13..18]\nb = 0..7, 8..10\nc = 5\n");
  auto a = map.get_ranges("a", {});
  REQUIRE(a.size() == 2);
  CHECK(a[0].lo == 3);
  CHECK(a[1].hi == 18);
  auto b = map.get_ranges("b", {});
  REQUIRE(b.size() == 2);
  CHECK(b[1].lo == 8);
  auto c = map.get_ranges("c", {});
  REQUIRE(c.size() == 1);
  CHECK(c[0].lo == 5);
  CHECK(c[0].hi == 5);
}

TEST_CASE("experiment defaults depend on the task") {
  ConfigMap length_map = ConfigMap::parse_string("[experiment]\ntask = length\n");
  ExperimentConfig length_cfg = ExperimentConfig::from_map(length_map);
  CHECK(length_cfg.split.observed.lo == 3);
  CHECK(length_cfg.split.observed.hi == 12);
  REQUIRE(length_cfg.split.evaluated.size() == 2);
  CHECK(length_cfg.split.evaluated[1].lo == 13);
  CHECK(length_cfg.split.evaluated[1].hi == 18);
  CHECK(!length_cfg.seq2seq());
  // LM default decodes by sampling with max_len = 1.5x the top length.
  CHECK(length_cfg.effective_decode().mode == DecodeMode::temperature);
  CHECK(length_cfg.effective_decode().max_len == 27);

  ConfigMap edit_map = ConfigMap::parse_string("[experiment]\ntask = edit\n");
  ExperimentConfig edit_cfg = ExperimentConfig::from_map(edit_map);
  CHECK(edit_cfg.split.observed.hi == 7);
  CHECK(edit_cfg.seq2seq());
  CHECK(edit_cfg.effective_decode().mode == DecodeMode::greedy);
  CHECK(edit_cfg.effective_decode().max_len == 50);

  ConfigMap sent_map = ConfigMap::parse_string("[experiment]\ntask = sentiment\n");
  ExperimentConfig sent_cfg = ExperimentConfig::from_map(sent_map);
  CHECK(sent_cfg.split.observed.lo == 1);
  CHECK(sent_cfg.split.observed.hi == 5);
  CHECK(sent_cfg.split.evaluated.size() == 1);
}

TEST_CASE("unknown keys are an error") {
  ConfigMap map = ConfigMap::parse_string("[experiment]\ntask = length\n[model]\nhiden = 64\n");
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_map(map), doctest::Contains("model.hiden"), ConfigError);
}

TEST_CASE("validation rejects inconsistent experiments") {
  ConfigMap bad_frac = ConfigMap::parse_string("[data]\ntrain_frac = 0.9\nvalid_frac = 0.2\n");
  CHECK_THROWS_AS(ExperimentConfig::from_map(bad_frac), ConfigError);

  ConfigMap bad_rating = ConfigMap::parse_string("[experiment]\ntask = sentiment\n[data]\nobserved = 1..9\n");
  CHECK_THROWS_AS(ExperimentConfig::from_map(bad_rating), ConfigError);

  // Head divisibility surfaces at parse time, not at first training step.
  // 256 + 1 (scalar desired) + 0 (no tracker) = 257, indivisible by 3.
  ConfigMap bad_heads = ConfigMap::parse_string(
      "[experiment]\narch = transformer\nstrategy = scalar\n"
      "[model]\ntoken_dim = 256\nn_heads = 3\ntracker = false\n");
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_map(bad_heads), doctest::Contains("257"), ConfigError);
}

TEST_CASE("model config derives value ranges from the data ranges") {
  ConfigMap map = ConfigMap::parse_string(
      "[experiment]\ntask = length\nstrategy = learnable\n[data]\nobserved = 3..12\nevaluated = [3..12, "
      "13..18]\n");
  ExperimentConfig cfg = ExperimentConfig::from_map(map);
  ModelConfig m = cfg.model_config(100);
  CHECK(m.desired.kind == EmbeddingKind::learnable);
  CHECK(m.desired.value_range.lo == 3);
  CHECK(m.desired.value_range.hi == 18);  // hull of observed and evaluated
  REQUIRE(m.tracker.kind != EmbeddingKind::none);
  CHECK(m.tracker.value_range.lo == 0);
  CHECK(m.tracker.value_range.hi == 30);  // grows to the larger of cap and max_len

  ConfigMap edit_map = ConfigMap::parse_string("[experiment]\ntask = edit\nstrategy = scalar_repeat\n");
  ModelConfig edit_m = ExperimentConfig::from_map(edit_map).model_config(100);
  CHECK(edit_m.seq2seq);
  CHECK(edit_m.tracker.value_range.lo == 0);
  CHECK(edit_m.tracker.value_range.hi == 10);

  ConfigMap sent_map = ConfigMap::parse_string("[experiment]\ntask = sentiment\nstrategy = scalar\n");
  ModelConfig sent_m = ExperimentConfig::from_map(sent_map).model_config(100);
  CHECK(sent_m.tracker.kind == EmbeddingKind::none);

  ConfigMap none_map = ConfigMap::parse_string("[experiment]\nstrategy = none\n");
  ModelConfig none_m = ExperimentConfig::from_map(none_map).model_config(100);
  CHECK(none_m.desired.kind == EmbeddingKind::none);
  CHECK(none_m.tracker.kind == EmbeddingKind::none);
}

TEST_CASE("canonical form ignores evaluation-only knobs") {
  ConfigMap base = ConfigMap::parse_string("[experiment]\ntask = length\n");
  ExperimentConfig cfg = ExperimentConfig::from_map(base);
  const std::string canon = cfg.canonical();
  CHECK(cfg.config_hash() == ExperimentConfig::from_map(base).config_hash());

  ExperimentConfig tweaked = cfg;
  tweaked.decode.mode = DecodeMode::greedy;
  tweaked.decode_mode_set = true;
  tweaked.decode.temperature = 0.3;
  tweaked.curve_samples = 500;
  CHECK(tweaked.canonical() == canon);

  // Training-relevant settings do move the hash.
  ExperimentConfig wider = cfg;
  wider.hidden = 128;
  CHECK(wider.canonical() != canon);
  ExperimentConfig longer = cfg;
  longer.decode.max_len = 40;
  longer.decode_max_len_set = true;
  CHECK(longer.canonical() != canon);
  ExperimentConfig reseeded = cfg;
  reseeded.seed = cfg.seed + 1;
  CHECK(reseeded.canonical() != canon);
}

TEST_CASE("cell names and directories") {
  ConfigMap map = ConfigMap::parse_string("[experiment]\ntask = length\narch = lstm\nstrategy = scalar\n");
  ExperimentConfig cfg = ExperimentConfig::from_map(map);
  CHECK(cfg.cell_name() == "length-lstm-scalar");
  cfg.strategy = EmbeddingKind::none;
  CHECK(cfg.cell_name() == "length-lstm-no_control");

  cfg.workdir = "w";
  const std::string dir = cell_dir(cfg);
  CHECK(dir.rfind("w/cells/length-lstm-no_control-", 0) == 0);
  CHECK(dir.size() > std::string("w/cells/length-lstm-no_control-").size());
}

TEST_CASE("grid expansion appends an uncontrolled baseline per architecture") {
  ConfigMap map = ConfigMap::parse_string("[experiment]\ntask = length\n");
  ExperimentConfig base = ExperimentConfig::from_map(map);
  auto cells = grid_cells(base, {EmbeddingKind::scalar, EmbeddingKind::learnable},
                          {ModelArch::lstm, ModelArch::transformer});
  REQUIRE(cells.size() == 6);
  int baselines = 0;
  for (const auto& c : cells) {
    if (c.strategy == EmbeddingKind::none) ++baselines;
    CHECK(c.task == base.task);
    CHECK(c.seed == base.seed);
  }
  CHECK(baselines == 2);
  // Explicitly requested baselines are not duplicated.
  auto with_none = grid_cells(base, {EmbeddingKind::none, EmbeddingKind::scalar}, {ModelArch::lstm});
  CHECK(with_none.size() == 2);
}

TEST_CASE("synthesis parameters cover the evaluated hull") {
  ConfigMap map = ConfigMap::parse_string("[experiment]\ntask = length\n");
  ExperimentConfig cfg = ExperimentConfig::from_map(map);
  SynthParams params = synth_params_for(cfg);
  CHECK(params.lengths.lo == 3);
  CHECK(params.lengths.hi == 18);
  CHECK(params.count == cfg.synth_count);
}
