#include "core/augment/augment.hpp"
#include "core/common/errors.hpp"
#include "core/data/synthetic.hpp"

#include <gtest/gtest.h>

using namespace sslseg;
using namespace sslseg::augment;

namespace {

data::ImageSample sample() { return data::generate_synthetic({.count = 1, .size = 32}, 8)[0]; }

}  // namespace

TEST(Augment, IdentityParamsKeepImage) {
  const auto s = sample();
  const data::Image out = apply_view(s.pixels, identity_params(32, 32), 32);
  ASSERT_EQ(out.pixels.size(), s.pixels.pixels.size());
  for (std::size_t i = 0; i < out.pixels.size(); ++i) EXPECT_NEAR(out.pixels[i], s.pixels.pixels[i], 1e-12);
}

TEST(Augment, FlipMirrorsColumns) {
  const auto s = sample();
  AugmentParams p = identity_params(32, 32);
  p.hflip = true;
  const data::Image out = apply_view(s.pixels, p, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) EXPECT_NEAR(out.at(y, x, 0), s.pixels.at(y, 31 - x, 0), 1e-12);
  }
}

TEST(Augment, GrayscaleEqualisesChannels) {
  data::Image img(4, 4, 3);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) img.at(y, x, 0) = 0.9, img.at(y, x, 1) = 0.1, img.at(y, x, 2) = 0.4;
  }
  AugmentParams p = identity_params(4, 4);
  p.to_grayscale = true;
  const data::Image out = apply_view(img, p, 4);
  EXPECT_NEAR(out.at(2, 2, 0), out.at(2, 2, 1), 1e-12);
  EXPECT_NEAR(out.at(2, 2, 1), out.at(2, 2, 2), 1e-12);
}

TEST(Augment, SampledParamsAreValidAndInRange) {
  const AugmentConfig cfg;
  for (int i = 0; i < 500; ++i) {
    Rng rng = view_rng(1, i, "s", 0);
    const AugmentParams p = sample_params(rng, 32, 40, cfg);
    EXPECT_NO_THROW(validate_params(p, 32, 40));
    const double area = static_cast<double>(p.crop.w) * p.crop.h / (32.0 * 40.0);
    EXPECT_LE(area, 1.0);
    if (p.jitter) {
      EXPECT_GE(p.jitter->brightness, 0.6);
      EXPECT_LE(p.jitter->brightness, 1.4);
      EXPECT_LE(std::abs(p.jitter->hue), 0.1);
    }
    if (p.blur_sigma) {
      EXPECT_GE(*p.blur_sigma, 0.1);
      EXPECT_LE(*p.blur_sigma, 2.0);
    }
  }
}

TEST(Augment, InvalidParamsRejected) {
  AugmentParams p = identity_params(8, 8);
  p.crop.w = 9;
  EXPECT_THROW(validate_params(p, 8, 8), ValidationError);
  p = identity_params(8, 8);
  p.blur_sigma = 3.0;
  EXPECT_THROW(validate_params(p, 8, 8), ValidationError);
}

TEST(Augment, BlurKernelIsOddAndCoversTenPercent) {
  for (int side : {8, 32, 50, 64, 224}) {
    const int k = blur_kernel_size(side);
    EXPECT_EQ(k % 2, 1);
    EXPECT_GE(k, 0.1 * side);
  }
}

TEST(Augment, OutputStaysInUnitRange) {
  const auto s = sample();
  for (int e = 0; e < 50; ++e) {
    const ViewPair v = two_views(s, 3, e, 32);
    for (double x : v.view_a.pixels) ASSERT_TRUE(x >= 0.0 && x <= 1.0);
    for (double x : v.view_b.pixels) ASSERT_TRUE(x >= 0.0 && x <= 1.0);
  }
}

TEST(Augment, ViewsAreSeededPerSampleAndEpoch) {
  const auto s = sample();
  const ViewPair a = two_views(s, 3, 1, 32), b = two_views(s, 3, 1, 32);
  EXPECT_EQ(a.view_a, b.view_a);
  EXPECT_EQ(a.view_b, b.view_b);
  EXPECT_EQ(a.source_id, s.id);
  EXPECT_NE(a.view_a, a.view_b);
  EXPECT_NE(two_views(s, 3, 2, 32).view_a, a.view_a);
  EXPECT_NE(two_views(s, 4, 1, 32).view_a, a.view_a);
}

TEST(Augment, ResizesToWorkingSize) {
  const auto s = sample();
  const ViewPair v = two_views(s, 0, 0, 16);
  EXPECT_EQ(v.view_a.height, 16);
  EXPECT_EQ(v.view_a.width, 16);
  EXPECT_EQ(v.view_a.channels, 3);
}
