#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sslseg::data {

// Interleaved HWC raster with values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

// Binary lesion mask, values in {0, 1}.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Mask&) const = default;
};

// Reads an 8-bit PNG, PGM (P5) or PPM (P6). Grayscale stays single-channel,
// colour inputs are returned as RGB.
Image read_raster(const std::filesystem::path& path);
// Any nonzero sample (in any channel) marks lesion.
Mask read_mask(const std::filesystem::path& path);

// Quantises to 8 bits; channels must be 1 or 3.
void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const Mask& mask);

// Replicates a single channel to RGB; RGB images are returned unchanged.
Image to_rgb(const Image& image);
// Bilinear with half-pixel centres.
Image resize_bilinear(const Image& image, int height, int width);
// Nearest neighbour, then re-binarised (>= 0.5 -> 1).
Mask resize_nearest(const Mask& mask, int height, int width);

}  // namespace sslseg::data
