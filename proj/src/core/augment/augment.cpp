#include "core/augment/augment.hpp"

#include "core/common/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace sslseg::augment {
namespace {

using data::Image;

Image crop(const Image& src, const CropBox& box) {
  Image out(box.h, box.w, src.channels);
  for (int y = 0; y < box.h; ++y) {
    for (int x = 0; x < box.w; ++x) {
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(box.y + y, box.x + x, c);
    }
  }
  return out;
}

void hflip(Image& img) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width / 2; ++x) {
      for (int c = 0; c < img.channels; ++c) std::swap(img.at(y, x, c), img.at(y, img.width - 1 - x, c));
    }
  }
}

double luma(const Image& img, int y, int x) {
  if (img.channels < 3) return img.at(y, x, 0);
  return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

void clamp01(Image& img) {
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
}

void adjust_brightness(Image& img, double f) {
  for (double& v : img.pixels) v *= f;
  clamp01(img);
}

void adjust_contrast(Image& img, double f) {
  double mean = 0.0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) mean += luma(img, y, x);
  }
  mean /= static_cast<double>(img.height) * img.width;
  for (double& v : img.pixels) v = (v - mean) * f + mean;
  clamp01(img);
}

void adjust_saturation(Image& img, double f) {
  if (img.channels < 3) return;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double g = luma(img, y, x);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = (img.at(y, x, c) - g) * f + g;
    }
  }
  clamp01(img);
}

void adjust_hue(Image& img, double shift) {
  if (img.channels < 3 || shift == 0.0) return;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
      const double delta = mx - mn;
      if (delta <= 0.0) continue;
      double h;
      if (mx == r) h = std::fmod((g - b) / delta, 6.0);
      else if (mx == g) h = (b - r) / delta + 2.0;
      else h = (r - g) / delta + 4.0;
      h = h / 6.0 + shift;
      h -= std::floor(h);
      const double s = delta / mx, v = mx;
      const double hh = h * 6.0;
      const int sector = static_cast<int>(hh) % 6;
      const double frac = hh - std::floor(hh);
      const double p = v * (1 - s), q = v * (1 - s * frac), t = v * (1 - s * (1 - frac));
      double rgb[3];
      switch (sector) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
      }
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
    }
  }
  clamp01(img);
}

void grayscale(Image& img) {
  if (img.channels < 3) return;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double g = luma(img, y, x);
      for (int c = 0; c < img.channels; ++c) img.at(y, x, c) = g;
    }
  }
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

void gaussian_blur(Image& img, double sigma) {
  const int k = blur_kernel_size(std::min(img.height, img.width));
  const int r = k / 2;
  std::vector<double> kernel(k);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    const double d = i - r;
    kernel[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    total += kernel[i];
  }
  for (double& v : kernel) v /= total;
  Image tmp(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += kernel[i] * img.at(y, reflect(x + i - r, img.width), c);
        tmp.at(y, x, c) = s;
      }
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += kernel[i] * tmp.at(reflect(y + i - r, img.height), x, c);
        img.at(y, x, c) = s;
      }
    }
  }
  clamp01(img);
}

}  // namespace

std::string AugmentConfig::describe() const {
  return fmt::format(
      "crop_scale=[{},{}] crop_ratio=[{:.4f},{:.4f}] jitter_p={} jitter=({},{},{},{}) grayscale_p={} "
      "blur_p={} blur_sigma=[{},{}] hflip_p={}",
      crop_scale_min, crop_scale_max, crop_ratio_min, crop_ratio_max, jitter_p, brightness, contrast,
      saturation, hue, grayscale_p, blur_p, blur_sigma_min, blur_sigma_max, hflip_p);
}

Rng view_rng(std::uint64_t seed, std::uint64_t epoch, const std::string& sample_id, int view_index) {
  return make_rng(seed, epoch, fnv1a(sample_id), static_cast<std::uint64_t>(view_index));
}

int blur_kernel_size(int side) {
  int k = static_cast<int>(std::ceil(0.1 * side - 1e-9));
  if (k < 1) k = 1;
  if (k % 2 == 0) ++k;
  return k;
}

AugmentParams identity_params(int height, int width) {
  AugmentParams p;
  p.crop = {0, 0, width, height};
  return p;
}

AugmentParams sample_params(Rng& rng, int height, int width, const AugmentConfig& cfg) {
  AugmentParams p;
  // Random resized crop: up to 10 attempts at a (scale, log-ratio) draw,
  // falling back to the full image.
  const double area = static_cast<double>(height) * width;
  p.crop = {0, 0, width, height};
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * uniform(rng, cfg.crop_scale_min, cfg.crop_scale_max);
    const double ratio = std::exp(uniform(rng, std::log(cfg.crop_ratio_min), std::log(cfg.crop_ratio_max)));
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w >= 1 && h >= 1 && w <= width && h <= height) {
      std::uniform_int_distribution<int> py(0, height - h), px(0, width - w);
      const int y = py(rng);
      const int x = px(rng);
      p.crop = {x, y, w, h};
      break;
    }
  }
  p.hflip = bernoulli(rng, cfg.hflip_p);
  if (bernoulli(rng, cfg.jitter_p)) {
    ColorJitter j;
    j.brightness = uniform(rng, std::max(0.0, 1 - cfg.brightness), 1 + cfg.brightness);
    j.contrast = uniform(rng, std::max(0.0, 1 - cfg.contrast), 1 + cfg.contrast);
    j.saturation = uniform(rng, std::max(0.0, 1 - cfg.saturation), 1 + cfg.saturation);
    j.hue = uniform(rng, -cfg.hue, cfg.hue);
    p.jitter = j;
  }
  p.to_grayscale = bernoulli(rng, cfg.grayscale_p);
  if (bernoulli(rng, cfg.blur_p)) p.blur_sigma = uniform(rng, cfg.blur_sigma_min, cfg.blur_sigma_max);
  return p;
}

void validate_params(const AugmentParams& p, int height, int width) {
  const auto& b = p.crop;
  if (b.w < 1 || b.h < 1 || b.x < 0 || b.y < 0 || b.x + b.w > width || b.y + b.h > height) {
    throw ValidationError(fmt::format("crop ({}, {}, {}, {}) is outside a {}x{} image", b.x, b.y, b.w, b.h,
                                      width, height));
  }
  if (p.blur_sigma && !(*p.blur_sigma >= 0.1 && *p.blur_sigma <= 2.0)) {
    throw ValidationError(fmt::format("blur sigma {} outside [0.1, 2.0]", *p.blur_sigma));
  }
}

Image apply_view(const Image& image, const AugmentParams& params, int size) {
  validate_params(params, image.height, image.width);
  Image out = data::resize_bilinear(crop(image, params.crop), size, size);
  if (params.hflip) hflip(out);
  if (params.jitter) {
    adjust_brightness(out, params.jitter->brightness);
    adjust_contrast(out, params.jitter->contrast);
    adjust_saturation(out, params.jitter->saturation);
    adjust_hue(out, params.jitter->hue);
  }
  if (params.to_grayscale) grayscale(out);
  if (params.blur_sigma) gaussian_blur(out, *params.blur_sigma);
  clamp01(out);
  return out;
}

Image apply_view(const data::ImageSample& sample, const AugmentParams& params, int size) {
  return apply_view(sample.pixels, params, size);
}

ViewPair two_views(const data::ImageSample& sample, std::uint64_t seed, std::uint64_t epoch, int size,
                   const AugmentConfig& config) {
  const auto& img = sample.pixels;
  ViewPair pair;
  pair.source_id = sample.id;
  Rng ra = view_rng(seed, epoch, sample.id, 0);
  pair.view_a = apply_view(img, sample_params(ra, img.height, img.width, config), size);
  Rng rb = view_rng(seed, epoch, sample.id, 1);
  pair.view_b = apply_view(img, sample_params(rb, img.height, img.width, config), size);
  return pair;
}

}  // namespace sslseg::augment
