#include "core/app/config.hpp"
#include "core/common/errors.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace sslseg;
using sslseg::app::Config;

TEST(Config, DefaultsFollowSchema) {
  const Config c;
  EXPECT_EQ(c.integer("data.train_count"), 546);
  EXPECT_EQ(c.real("finetune.lr"), 1e-4);
  EXPECT_EQ(c.str("pretrain.method"), "simclr");
  EXPECT_FALSE(c.is_set("data.train_count"));
  EXPECT_EQ(c.keys().size(), app::schema().size());
  for (const auto& k : app::schema()) EXPECT_EQ(c.raw(k.name), k.default_value) << k.name;
}

TEST(Config, TypedValidation) {
  Config c;
  c.set("data.image_size", "64");
  EXPECT_EQ(c.integer("data.image_size"), 64);
  EXPECT_TRUE(c.is_set("data.image_size"));
  EXPECT_THROW(c.set("data.image_size", "6.5"), ConfigError);
  EXPECT_THROW(c.set("data.image_size", "big"), ConfigError);
  EXPECT_THROW(c.set("data.split_seed", "-1"), ConfigError);
  EXPECT_THROW(c.set("finetune.lr", "nan"), ConfigError);
  EXPECT_THROW(c.set("finetune.lr", "1e-4x"), ConfigError);
  EXPECT_THROW(c.set("finetune.colour", "red"), ConfigError);
  EXPECT_THROW(c.raw("nope.key"), ConfigError);
  EXPECT_EQ(c.integer("data.image_size"), 64);
}

TEST(Config, MergesIniFile) {
  testutil::TempDir dir("config");
  std::ofstream(dir / "run.ini") << "; comment\n[pretrain]\nmethod = moco\nepochs=5\n\n[model]\narch = resnet18_unet\n";
  Config c;
  c.merge_file(dir / "run.ini");
  EXPECT_EQ(c.str("pretrain.method"), "moco");
  EXPECT_EQ(c.integer("pretrain.epochs"), 5);
  EXPECT_EQ(c.str("model.arch"), "resnet18_unet");

  std::ofstream(dir / "bad.ini") << "[pretrain]\nepochs = many\n";
  EXPECT_THROW(c.merge_file(dir / "bad.ini"), ConfigError);
  std::ofstream(dir / "unknown.ini") << "[pretrain]\nwarmup = 3\n";
  EXPECT_THROW(c.merge_file(dir / "unknown.ini"), ConfigError);
  std::ofstream(dir / "loose.ini") << "epochs = 3\n";
  EXPECT_THROW(c.merge_file(dir / "loose.ini"), ConfigError);
  std::ofstream(dir / "broken.ini") << "[pretrain\n";
  EXPECT_THROW(c.merge_file(dir / "broken.ini"), ConfigError);
}

TEST(Config, DumpRoundTrips) {
  testutil::TempDir dir("config_dump");
  Config c = Config::smoke_preset();
  c.set("finetune.seed", "17");
  std::ofstream(dir / "dump.ini") << c.dump();
  Config back;
  back.merge_file(dir / "dump.ini");
  for (const auto& k : c.keys()) EXPECT_EQ(back.raw(k), c.raw(k)) << k;
}

TEST(Config, SmokePresetMatchesDeskScaleRun) {
  const Config c = Config::smoke_preset();
  EXPECT_EQ(c.integer("data.synthetic_count"), 200);
  EXPECT_EQ(c.integer("data.image_size"), 32);
  EXPECT_EQ(c.integer("pretrain.epochs"), 20);
  EXPECT_EQ(c.integer("pretrain.batch_size"), 64);
  EXPECT_EQ(c.real("finetune.fraction"), 0.25);
  EXPECT_EQ(c.integer("finetune.epochs"), 30);
}
