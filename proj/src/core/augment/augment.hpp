#pragma once

#include "core/common/rng.hpp"
#include "core/data/datasets.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace sslseg::augment {

struct CropBox {
  int x = 0, y = 0, w = 0, h = 0;
  bool operator==(const CropBox&) const = default;
};

// brightness/contrast/saturation are multiplicative factors around 1; hue is
// a shift in turns.
struct ColorJitter {
  double brightness = 1.0, contrast = 1.0, saturation = 1.0, hue = 0.0;
  bool operator==(const ColorJitter&) const = default;
};

struct AugmentParams {
  bool hflip = false;
  CropBox crop;
  std::optional<ColorJitter> jitter;
  bool to_grayscale = false;
  std::optional<double> blur_sigma;
  bool operator==(const AugmentParams&) const = default;
};

// Transform set shared by all three methods (MoCo v2 style).
struct AugmentConfig {
  double crop_scale_min = 0.2, crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0, crop_ratio_max = 4.0 / 3.0;
  double jitter_p = 0.8;
  double brightness = 0.4, contrast = 0.4, saturation = 0.4, hue = 0.1;
  double grayscale_p = 0.2;
  double blur_p = 0.5;
  double blur_sigma_min = 0.1, blur_sigma_max = 2.0;
  double hflip_p = 0.5;

  std::string describe() const;
};

struct ViewPair {
  data::Image view_a, view_b;
  std::string source_id;
};

// Independent stream per (seed, epoch, sample, view): parallel loaders and
// batch composition cannot change what a sample sees.
Rng view_rng(std::uint64_t seed, std::uint64_t epoch, const std::string& sample_id, int view_index);

AugmentParams sample_params(Rng& rng, int height, int width, const AugmentConfig& config = {});
AugmentParams identity_params(int height, int width);
// Throws ValidationError when the crop leaves the image or sigma is out of range.
void validate_params(const AugmentParams& params, int height, int width);

// Odd kernel side covering at least 10% of the image side.
int blur_kernel_size(int side);

// crop-and-resize -> hflip -> colour jitter -> grayscale -> blur, clamped to [0,1].
data::Image apply_view(const data::Image& image, const AugmentParams& params, int size);
data::Image apply_view(const data::ImageSample& sample, const AugmentParams& params, int size);

ViewPair two_views(const data::ImageSample& sample, std::uint64_t seed, std::uint64_t epoch, int size,
                   const AugmentConfig& config = {});

}  // namespace sslseg::augment
