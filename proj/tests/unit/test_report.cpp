#include "core/common/errors.hpp"
#include "core/data/image.hpp"
#include "core/report/report.hpp"
#include "fixtures.hpp"
#include "reference_grid.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace sslseg;
using namespace sslseg::report;
using finetune::RunResult;

namespace {

RunResult run(std::string method, std::string corpus, double fraction, double dice, std::uint64_t seed = 0) {
  RunResult r;
  r.method = std::move(method);
  r.corpus = std::move(corpus);
  r.arch = "resnet50_unet";
  r.image_size = 32;
  r.fraction = fraction;
  r.seed = seed;
  r.test_dice = dice;
  return r;
}

// One run per cell whose value is the reference mean.
std::vector<RunResult> runs_from(const reference::Grid& g) {
  std::vector<RunResult> out;
  for (const auto& row : g.rows) {
    for (std::size_t f = 0; f < 4; ++f) {
      RunResult r = run(row.method, row.method == "Supervised" ? "-" : row.corpus, reference::kFractions[f],
                        row.mean[f]);
      r.arch = g.arch;
      r.image_size = g.image_size;
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

TEST(Aggregate, ConstantSample) {
  std::vector<RunResult> rs;
  for (int s = 0; s < 10; ++s) rs.push_back(run("MoCo", "BUS", 1.0, 0.6, s));
  const ResultsTable t = aggregate(rs);
  const Cell* c = t.find("MoCo", "BUS")->cell(1.0);
  ASSERT_NE(c, nullptr);
  EXPECT_NEAR(c->mean, 0.6, 1e-15);
  EXPECT_NEAR(c->std, 0.0, 1e-15);
  EXPECT_EQ(round3(c->std), 0.0);
  EXPECT_EQ(c->n, 10);
}

TEST(Aggregate, SampleStd) {
  const ResultsTable t = aggregate({run("MoCo", "BUS", 0.5, 0.5), run("MoCo", "BUS", 0.5, 0.7, 1)});
  const Cell* c = t.find("MoCo", "BUS")->cell(0.5);
  EXPECT_NEAR(c->mean, 0.6, 1e-15);
  EXPECT_NEAR(c->std, std::sqrt(0.02), 1e-15);
  EXPECT_EQ(round3(c->std), 0.141);
  EXPECT_EQ(c->n, 2);
}

TEST(Aggregate, AbsentCellIsNotZero) {
  const ResultsTable t = aggregate({run("MoCo", "BUS", 1.0, 0.5)});
  EXPECT_EQ(t.find("MoCo", "BUS")->cell(0.1), nullptr);
  EXPECT_EQ(t.find("SimCLR", "BUS"), nullptr);
  EXPECT_NE(format_text(t).find(" - "), std::string::npos);
}

TEST(Aggregate, RowOrder) {
  const ResultsTable t = aggregate({run("SimSiam", "Multi-organ", 1, .5), run("MoCo", "BUS", 1, .5),
                                    run("Supervised", "-", 1, .5), run("SimCLR", "CIFAR-10", 1, .5),
                                    run("MoCo", "CIFAR-10", 1, .5)});
  std::vector<std::string> order;
  for (const auto& r : t.rows) order.push_back(r.method + "/" + r.corpus);
  EXPECT_EQ(order, (std::vector<std::string>{"Supervised/-", "MoCo/CIFAR-10", "SimCLR/CIFAR-10", "MoCo/BUS",
                                             "SimSiam/Multi-organ"}));
}

TEST(Aggregate, PermutationInvariantAndByteDeterministic) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.3, 0.8);
  std::vector<RunResult> rs;
  for (const char* m : {"MoCo", "SimCLR", "SimSiam"}) {
    for (double f : kFractions) {
      for (int s = 0; s < 10; ++s) rs.push_back(run(m, "BUS", f, u(rng), s));
    }
  }
  const std::string text = format_text(aggregate(rs)), csv = format_csv(aggregate(rs));
  const std::string means = format_csv(dataset_mean_table(aggregate(rs)));
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(rs.begin(), rs.end(), rng);
    EXPECT_EQ(format_text(aggregate(rs)), text);
    EXPECT_EQ(format_csv(aggregate(rs)), csv);
    EXPECT_EQ(format_csv(dataset_mean_table(aggregate(rs))), means);
  }
}

TEST(Aggregate, RejectsMixedTablesAndBadDice) {
  auto other = run("MoCo", "BUS", 1, .5);
  other.image_size = 64;
  EXPECT_THROW(aggregate({run("MoCo", "BUS", 1, .5), other}), ValidationError);
  EXPECT_EQ(aggregate_all({run("MoCo", "BUS", 1, .5), other}).size(), 2u);
  EXPECT_THROW(aggregate({run("MoCo", "BUS", 1, 1.5)}), ValidationError);
}

TEST(MeanTable, Anchors) {
  const auto& g = reference::grids().front();
  const MeanTable m = dataset_mean_table(aggregate(runs_from(g)));
  EXPECT_EQ(m.find("CIFAR-10")->cells.at(1.0), 0.599);
  EXPECT_EQ(m.find("Multi-organ")->cells.at(1.0), 0.619);
  EXPECT_EQ(m.find("BUS"), &m.rows[1]);
}

TEST(MeanTable, EqualMeansAreIdempotent) {
  const MeanTable m = dataset_mean_table(
      aggregate({run("MoCo", "BUS", 1, .42), run("SimCLR", "BUS", 1, .42), run("SimSiam", "BUS", 1, .42)}));
  EXPECT_EQ(m.find("BUS")->cells.at(1.0), 0.42);
  EXPECT_EQ(m.find("BUS")->cells.count(0.5), 0u);
}

TEST(MeanTable, IncompleteCorpusNamesMissingMethods) {
  try {
    dataset_mean_table(aggregate({run("MoCo", "BUS", 1, .5)}));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("SimCLR"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("SimSiam"), std::string::npos);
  }
}

TEST(MeanTable, RoundingHalfCases) {
  EXPECT_EQ(round3(0.5995), 0.6);
  EXPECT_EQ(round3(0.1234), 0.123);
  EXPECT_EQ(round3(1.0 / 3.0), 0.333);
}

TEST(Format, TextHasFooterAndCsvHeader) {
  const ResultsTable t = aggregate({run("MoCo", "BUS", 1, .5), run("MoCo", "BUS", 1, .7, 1)});
  const std::string text = format_text(t);
  EXPECT_NE(text.find("0.600 +/- 0.141"), std::string::npos);
  EXPECT_NE(text.find("sample standard deviation"), std::string::npos);
  EXPECT_EQ(format_csv(t).rfind("arch,size,method,dataset,", 0), 0u);
}

TEST(Panels, FourSamplesFourPanelsAndOverview) {
  testutil::TempDir dir("panels");
  auto set = testutil::synthetic_set(8, 4, 4);
  auto net = models::build_segmentation_network(testutil::tiny_unet(), 1);
  std::vector<data::ImageSample> samples;
  const char* names[] = {"benign_1", "benign_2", "malignant_1", "malignant_2"};
  for (int i = 0; i < 4; ++i) {
    auto s = set.plain.at(set.split.test_ids[i]);
    s.id = names[i];
    samples.push_back(std::move(s));
  }
  // Make the ground truth equal the prediction for the first sample.
  samples[0].mask = finetune::predict(*net, {&samples[0].pixels})[0];
  std::vector<const data::ImageSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);

  const PanelExport ex = export_mask_panels(*net, ptrs, dir.path());
  ASSERT_EQ(ex.panels.size(), 4u);
  ASSERT_TRUE(ex.overview.has_value());
  for (const auto& p : ex.panels) EXPECT_TRUE(std::filesystem::exists(p));

  const data::Image panel = data::read_raster(ex.panels[0]);
  ASSERT_EQ(panel.width, 48);
  ASSERT_EQ(panel.height, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < panel.channels; ++c) ASSERT_EQ(panel.at(y, 16 + x, c), panel.at(y, 32 + x, c));
    }
  }
  const data::Image overview = data::read_raster(*ex.overview);
  EXPECT_EQ(overview.width, 2 * 48 + 4);
}

TEST(Panels, NoiseInputStillWritesFinitePixels) {
  testutil::TempDir dir("panels_noise");
  auto net = models::build_segmentation_network(testutil::tiny_unet(), 2);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  data::ImageSample noise{"noise", data::Source::kBus, data::Image(16, 16, 3), data::Mask(16, 16)};
  for (auto& v : noise.pixels.pixels) v = u(rng);
  data::ImageSample unlabeled{"nolabel", data::Source::kBus, data::Image(16, 16, 3), std::nullopt};
  const PanelExport ex = export_mask_panels(*net, {&noise, &unlabeled}, dir.path());
  ASSERT_EQ(ex.panels.size(), 1u);
  EXPECT_EQ(ex.skipped, (std::vector<std::string>{"nolabel"}));
  EXPECT_FALSE(ex.overview.has_value());
  const data::Image img = data::read_raster(ex.panels[0]);
  for (double v : img.pixels) EXPECT_TRUE(std::isfinite(v));
}
