#include "core/common/errors.hpp"
#include "core/finetune/finetune.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace sslseg;
using namespace sslseg::finetune;

namespace {

data::Mask mask_from(std::initializer_list<int> bits, int w) {
  data::Mask m(static_cast<int>(bits.size()) / w, w);
  std::size_t i = 0;
  for (int b : bits) m.values[i++] = static_cast<std::uint8_t>(b);
  return m;
}

// Counted by hand from the definition.
double dice_oracle(const data::Mask& p, const data::Mask& g) {
  int inter = 0, sp = 0, sg = 0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    inter += p.values[i] && g.values[i];
    sp += p.values[i];
    sg += g.values[i];
  }
  return sp + sg == 0 ? 1.0 : 2.0 * inter / (sp + sg);
}

FinetuneConfig quick(int epochs = 2) {
  FinetuneConfig c;
  c.network = testutil::tiny_unet();
  c.epochs = epochs;
  c.batch_size = 4;
  c.lr = 1e-3;
  c.patience = 0;
  return c;
}

std::shared_ptr<const models::Checkpoint> ssl_checkpoint(models::Method method, std::uint64_t seed) {
  const auto spec = models::with_head(testutil::tiny_unet(), models::head_for(method));
  auto net = models::build_ssl_network(spec, method, seed);
  return std::make_shared<models::Checkpoint>(models::snapshot(net->params(), method, "BUS", spec));
}

}  // namespace

TEST(Dice, Examples) {
  const auto a = mask_from({1, 1, 0, 0}, 2), b = mask_from({0, 0, 1, 1}, 2), c = mask_from({1, 0, 0, 0}, 2);
  EXPECT_EQ(dice(a, a), 1.0);
  EXPECT_EQ(dice(a, b), 0.0);
  EXPECT_NEAR(dice(mask_from({1, 1, 1, 0}, 2), mask_from({1, 0, 0, 0}, 2)), 0.5, 1e-15);
  EXPECT_NEAR(dice(mask_from({1, 1, 0, 0, 0, 0}, 3), mask_from({1, 0, 1, 0, 0, 0}, 3)), 0.5, 1e-15);
  EXPECT_NEAR(dice(mask_from({1, 1, 1, 1, 1, 0, 0, 0, 0, 0}, 5), mask_from({1, 1, 1, 0, 0, 1, 1, 0, 0, 0}, 5)), 0.6,
              1e-15);
  EXPECT_EQ(dice(data::Mask(3, 3), data::Mask(3, 3)), 1.0);
  EXPECT_EQ(dice(c, data::Mask(2, 2)), 0.0);
  EXPECT_THROW(dice(a, data::Mask(3, 2)), ValidationError);
}

TEST(Dice, MatchesOracleAndIsSymmetric) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 500; ++t) {
    data::Mask p(6, 7), g(6, 7);
    for (auto& v : p.values) v = rng() % 3 == 0;
    for (auto& v : g.values) v = rng() % 2 == 0;
    EXPECT_NEAR(dice(p, g), dice_oracle(p, g), 1e-15);
    EXPECT_EQ(dice(p, g), dice(g, p));
    EXPECT_GE(dice(p, g), 0.0);
    EXPECT_LE(dice(p, g), 1.0);
  }
}

TEST(Finetune, FractionSelectsFloorOfTrain) {
  const auto set = testutil::synthetic_set(546, 4, 4, 8);
  FinetuneConfig c = quick(0);
  c.network = testutil::tiny_unet(8);
  c.fraction = 0.1;
  const auto out = finetune::finetune(c, set.split, set.plain);
  EXPECT_EQ(out.result.train_images, 54u);
  EXPECT_TRUE(out.result.leakage_free);
}

TEST(Finetune, ZeroEpochsStillEvaluates) {
  const auto set = testutil::synthetic_set(12, 4, 4);
  const auto out = finetune::finetune(quick(0), set.split, set.plain);
  EXPECT_TRUE(std::isfinite(out.result.test_dice));
  EXPECT_GE(out.result.test_dice, 0.0);
  EXPECT_LE(out.result.test_dice, 1.0);
  EXPECT_EQ(out.result.method, "Supervised");
  EXPECT_EQ(out.result.corpus, "-");
}

TEST(Finetune, RepeatsAreDeterministic) {
  const auto set = testutil::synthetic_set(12, 4, 4);
  const auto a = repeat_experiment(quick(), 2, 7, set.split, set.plain);
  const auto b = repeat_experiment(quick(), 2, 7, set.split, set.plain);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].seed, 7u);
  EXPECT_EQ(a[1].seed, 8u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].test_dice, b[i].test_dice);
    EXPECT_EQ(a[i].train_losses, b[i].train_losses);
    EXPECT_EQ(a[i].val_curve, b[i].val_curve);
  }
  EXPECT_NE(a[0].train_losses, a[1].train_losses);
  EXPECT_THROW(repeat_experiment(quick(), 0, 0, set.split, set.plain), ConfigError);
}

TEST(Finetune, TrainingReducesLoss) {
  const auto set = testutil::synthetic_set(24, 4, 4);
  FinetuneConfig c = quick(8);
  const auto out = finetune::finetune(c, set.split, set.plain);
  ASSERT_EQ(out.result.train_losses.size(), 8u);
  EXPECT_LT(out.result.train_losses.back(), out.result.train_losses.front());
  EXPECT_EQ(out.result.val_curve.size(), 8u);
  EXPECT_GE(out.result.best_epoch, 1);
}

TEST(Finetune, LeakageIsRejected) {
  auto set = testutil::synthetic_set(12, 4, 4);
  set.split.test_ids[0] = set.split.train_ids[0];
  EXPECT_THROW(finetune::finetune(quick(), set.split, set.plain), ValidationError);
}

TEST(Finetune, MissingMaskIsIngestionError) {
  auto set = testutil::synthetic_set(12, 4, 4);
  set.plain.at(set.split.train_ids[0]).mask.reset();
  EXPECT_THROW(finetune::finetune(quick(), set.split, set.plain), IngestionError);
}

TEST(Finetune, SizeMismatchWithCheckpointIsConfigError) {
  const auto set = testutil::synthetic_set(12, 4, 4);
  FinetuneConfig c = quick();
  auto spec = models::with_head(testutil::tiny_unet(32), models::Head::kProj2Layer);
  auto net = models::build_ssl_network(spec, models::Method::kSimclr, 1);
  c.init = std::make_shared<models::Checkpoint>(models::snapshot(net->params(), models::Method::kSimclr, "BUS", spec));
  EXPECT_THROW(finetune::finetune(c, set.split, set.plain), ConfigError);
}

TEST(Finetune, EncoderOnlyAuditShowsFreshDecoder) {
  const auto set = testutil::synthetic_set(12, 4, 4);
  FinetuneConfig c = quick(1);
  c.init = ssl_checkpoint(models::Method::kSimclr, 3);
  c.scope = models::TransferScope::kEncoderOnly;
  const auto out = finetune::finetune(c, set.split, set.plain);
  EXPECT_TRUE(out.result.audit.encoder_matches_checkpoint);
  EXPECT_TRUE(out.result.audit.decoder_fresh);
  EXPECT_FALSE(out.result.audit.decoder_matches_checkpoint);
  EXPECT_GT(out.result.audit.copied, 0u);
  EXPECT_EQ(out.result.method, "SimCLR");
  EXPECT_EQ(out.result.corpus, "BUS");

  c.scope = models::TransferScope::kEncoderAndDecoder;
  const auto both = finetune::finetune(c, set.split, set.plain);
  EXPECT_TRUE(both.result.audit.decoder_matches_checkpoint);
  EXPECT_FALSE(both.result.audit.decoder_fresh);
}

TEST(Finetune, ResultsLogRoundTrip) {
  testutil::TempDir dir("results");
  const auto set = testutil::synthetic_set(12, 4, 4);
  FinetuneConfig c = quick(1);
  c.results_log = dir / "results.tsv";
  const auto runs = repeat_experiment(c, 2, 0, set.split, set.plain);
  const auto back = read_results(dir / "results.tsv");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(format_result_line(back[i]), format_result_line(runs[i]));
    EXPECT_NEAR(back[i].test_dice, runs[i].test_dice, 1e-9);
  }
}

TEST(Finetune, ResultLineParsing) {
  const RunResult r = parse_result_line("SimCLR\tBUS\tunet\t32\t0.25\t3\t0.812500000");
  EXPECT_EQ(r.method, "SimCLR");
  EXPECT_EQ(r.image_size, 32);
  EXPECT_EQ(r.fraction, 0.25);
  EXPECT_EQ(r.seed, 3u);
  EXPECT_EQ(r.test_dice, 0.8125);
  EXPECT_EQ(format_result_line(r), "SimCLR\tBUS\tunet\t32\t0.25\t3\t0.812500000");
  EXPECT_THROW(parse_result_line("a\tb"), IngestionError);
  EXPECT_THROW(parse_result_line("a\tb\tunet\tx\t1\t0\t0.5"), IngestionError);
  EXPECT_THROW(parse_result_line("a\tb\tunet\t32\t1\t0\t1.5"), IngestionError);

  testutil::TempDir dir("results_parse");
  std::ofstream(dir / "log.tsv") << "# header\n\nMoCo\tBUS\tunet\t32\t1\t0\t0.5\n";
  EXPECT_EQ(read_results(dir / "log.tsv").size(), 1u);
  EXPECT_THROW(read_results(dir / "none.tsv"), IngestionError);
}

TEST(Finetune, PredictThresholdsLogits) {
  const auto set = testutil::synthetic_set(12, 4, 4);
  auto net = models::build_segmentation_network(testutil::tiny_unet(), 1);
  std::vector<const data::Image*> imgs;
  for (const auto& id : set.split.test_ids) imgs.push_back(&set.plain.at(id).pixels);
  const auto masks = predict(*net, imgs, 3);
  ASSERT_EQ(masks.size(), 4u);
  for (const auto& m : masks) {
    EXPECT_EQ(m.height, 16);
    for (auto v : m.values) EXPECT_LE(v, 1);
  }
  EXPECT_THROW(mean_dice(*net, {}, set.plain), ConfigError);
}
