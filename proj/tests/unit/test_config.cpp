// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "gnet/config.hpp"
#include "test_support.hpp"

using namespace gnet;

TEST_CASE("empty text gives the defaults") {
  const RunConfig c = parse_run_config("");
  CHECK(c.dataset_kind == "market");
  CHECK(c.model.num_classes == 0);
  CHECK(c.model.reduction_groups == 8);
  CHECK(c.train.sgd.base_lr_fresh == 0.1);
  CHECK(c.train.sgd.base_lr_pretrained == 0.01);
  CHECK(c.train.sgd.batch_size == 32);
  CHECK(c.train.sgd.decay_epochs == std::vector<int>{40, 60});
  CHECK(c.train.normalization.mean[0] == 0.485f);
  CHECK(c.train.augment.erase_prob == 0.5);
}

TEST_CASE("values, comments and whitespace") {
  const RunConfig c = parse_run_config(
      "# toy run\n"
      "dataset.kind = synth\n"
      "  synth.ids=5 \n"
      "\n"
      "model.part_scheme = 1, 2\n"
      "model.level_taps = fire_conv5a\n"
      "model.accompanying = false\n"
      "sgd.decay_epochs =\n"
      "sgd.lr_fresh = 2.5e-3\n"
      "normalize.std = 0.5,0.5,0.25\r\n"
      "seed = 18446744073709551615\n"
      "output.dir = runs/a b\n");
  CHECK(c.dataset_kind == "synth");
  CHECK(c.synth.ids == 5);
  CHECK(c.model.part_scheme == std::vector<std::size_t>{1, 2});
  CHECK(c.model.level_taps == std::vector<std::string>{"fire_conv5a"});
  CHECK_FALSE(c.model.with_accompanying);
  CHECK(c.train.sgd.decay_epochs.empty());
  CHECK(c.train.sgd.base_lr_fresh == 2.5e-3);
  CHECK(c.train.normalization.stddev[2] == 0.25f);
  CHECK(c.seed == 18446744073709551615ULL);
  CHECK(c.output_dir == "runs/a b");
}

TEST_CASE("serialization round trip is idempotent") {
  const char* texts[] = {
      "",
      "dataset.kind = synth\nsgd.lr_fresh = 0.003\nnormalize.mean = 0.1,0.2,0.3\nmodel.part_scheme = 3\n",
      "sgd.momentum = 0.123456789012345678\naugment.erase_area_max = 0.3333333333333333\nsgd.decay_epochs = 5\n",
  };
  for (const char* t : texts) {
    CAPTURE(t);
    const std::string once = serialize_run_config(parse_run_config(t));
    const std::string twice = serialize_run_config(parse_run_config(once));
    CHECK(once == twice);
  }
  // Every key appears exactly once.
  const std::string all = serialize_run_config(RunConfig{});
  for (const auto& k : config_keys()) {
    const std::string line = k + " = ";
    const bool present = all.rfind(line, 0) == 0 || all.find("\n" + line) != std::string::npos;
    CHECK_MESSAGE(present, k);
  }
}

TEST_CASE("errors name the line") {
  CHECK_THROWS_WITH_AS(parse_run_config("seed = 1\nmodel.colour = red\n"), doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("seed = 1\nmodel.colour = red\n"), doctest::Contains("model.colour"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("\n\nseed 4\n"), doctest::Contains("line 3"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("seed = 1\nseed = 2\n"), doctest::Contains("duplicate"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("sgd.momentum = fast\n"), doctest::Contains("sgd.momentum"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("sgd.batch_size = 3.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("synth.ids = -4\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("model.accompanying = yes\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("normalize.mean = 0.1,0.2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("sgd.lr_fresh = nan\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("dataset.kind = lmdb\n"), ConfigError);
}

TEST_CASE("validation") {
  RunConfig c;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("dataset.root"), ConfigError);
  c.dataset_root = "/data/market";
  CHECK_NOTHROW(c.validate());
  c.train.sgd.base_lr_fresh = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.train.sgd.base_lr_fresh = 0.1;
  c.model.reduction_groups = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.model.reduction_groups = 8;
  c.dataset_kind = "synth";
  c.synth.ids = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("overrides: explicit keys and the environment") {
  RunConfig c = parse_run_config("seed = 3\n");
  set_config_value(c, "sgd.epochs", "12");
  CHECK(c.train.sgd.total_epochs == 12);
  CHECK_THROWS_AS(set_config_value(c, "sgd.epoch", "12"), ConfigError);

  ::setenv("GNET_SEED", "41", 1);
  apply_environment(c);
  CHECK(c.seed == 41);
  ::setenv("GNET_SEED", "forty", 1);
  CHECK_THROWS_WITH_AS(apply_environment(c), doctest::Contains("GNET_SEED"), ConfigError);
  ::unsetenv("GNET_SEED");
  apply_environment(c);
  CHECK(c.seed == 41);
}

TEST_CASE("config files") {
  test::TempDir dir("config");
  {
    std::ofstream f(dir / "run.cfg");
    f << "dataset.kind = synth\nbogus = 1\n";
  }
  CHECK_THROWS_WITH_AS(load_run_config(dir / "run.cfg"), doctest::Contains("run.cfg"), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "absent.cfg"), ConfigError);
}
