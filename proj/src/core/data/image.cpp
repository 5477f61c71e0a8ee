#include "core/data/image.hpp"

#include "core/common/errors.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace sslseg::data {
namespace {

Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IngestionError(fmt::format("cannot read PNG {}: {}", path.string(), img.message));
  }
  const bool colour = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = colour ? 3 : 1;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IngestionError(fmt::format("cannot decode PNG {}: {}", path.string(), msg));
  }
  Image out(static_cast<int>(img.height), static_cast<int>(img.width), channels);
  for (std::size_t i = 0; i < buffer.size(); ++i) out.pixels[i] = buffer[i] / 255.0;
  return out;
}

std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  return {};
}

Image read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(fmt::format("cannot open {}", path.string()));
  const std::string magic = next_token(in);
  const int channels = magic == "P5" ? 1 : magic == "P6" ? 3 : 0;
  if (channels == 0) throw IngestionError(fmt::format("{}: unsupported netpbm type '{}'", path.string(), magic));
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (maxval != 255) throw IngestionError(fmt::format("{}: only 8-bit netpbm is supported", path.string()));
  in.get();
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw IngestionError(fmt::format("{}: truncated pixel data", path.string()));
  }
  Image out(h, w, channels);
  for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = buf[i] / 255.0;
  return out;
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png_bytes(const std::filesystem::path& path, int h, int w, int channels,
                     const std::vector<png_byte>& bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError(fmt::format("cannot write {}: {}", path.string(), img.message));
  }
}

}  // namespace

Image read_raster(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IngestionError(fmt::format("missing file {}", path.string()));
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_netpbm(path);
  return read_png(path);
}

Mask read_mask(const std::filesystem::path& path) {
  const Image img = read_raster(path);
  Mask m(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      bool on = false;
      for (int c = 0; c < img.channels; ++c) on = on || img.at(y, x, c) > 0.0;
      m.at(y, x) = on ? 1 : 0;
    }
  }
  return m;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw IoError(fmt::format("cannot write {}-channel image as PNG", image.channels));
  }
  std::vector<png_byte> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(image.pixels[i]);
  write_png_bytes(path, image.height, image.width, image.channels, bytes);
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<png_byte> bytes(mask.values.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.values[i] ? 255 : 0;
  write_png_bytes(path, mask.height, mask.width, 1, bytes);
}

Image to_rgb(const Image& image) {
  if (image.channels == 3) return image;
  if (image.channels != 1) throw ValidationError(fmt::format("cannot convert {} channels to RGB", image.channels));
  Image out(image.height, image.width, 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    for (int c = 0; c < 3; ++c) out.pixels[i * 3 + c] = image.pixels[i];
  }
  return out;
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (height <= 0 || width <= 0) throw ValidationError(fmt::format("resize target must be positive, got {}x{}", height, width));
  if (image.height == height && image.width == width) return image;
  Image out(height, width, image.channels);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    int y0 = std::min(static_cast<int>(fy), image.height - 1);
    int y1 = std::min(y0 + 1, image.height - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      int x0 = std::min(static_cast<int>(fx), image.width - 1);
      int x1 = std::min(x0 + 1, image.width - 1);
      double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = (1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c);
        const double bot = (1 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c);
        out.at(y, x, c) = std::clamp((1 - wy) * top + wy * bot, 0.0, 1.0);
      }
    }
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int height, int width) {
  if (height <= 0 || width <= 0) throw ValidationError(fmt::format("resize target must be positive, got {}x{}", height, width));
  if (mask.height == height && mask.width == width) return mask;
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(static_cast<int>((y + 0.5) * mask.height / height), mask.height - 1);
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(static_cast<int>((x + 0.5) * mask.width / width), mask.width - 1);
      out.at(y, x) = mask.at(sy, sx) >= 1 ? 1 : 0;
    }
  }
  return out;
}

}  // namespace sslseg::data
