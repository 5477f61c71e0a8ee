#include "core/data/batch.hpp"

#include "core/common/errors.hpp"

#include <fmt/format.h>

namespace sslseg::data {

nn::Tensor to_tensor(std::span<const Image* const> images) {
  if (images.empty()) throw ValidationError("cannot batch zero images");
  const Image& first = *images.front();
  nn::Tensor t(static_cast<int>(images.size()), first.channels, first.height, first.width);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& im = *images[b];
    if (im.height != first.height || im.width != first.width || im.channels != first.channels) {
      throw ValidationError(fmt::format("batch mixes {}x{}x{} and {}x{}x{} images", first.height, first.width,
                                        first.channels, im.height, im.width, im.channels));
    }
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x)
        for (int c = 0; c < im.channels; ++c) t.at(static_cast<int>(b), c, y, x) = im.at(y, x, c);
  }
  return t;
}

nn::Tensor to_tensor(const Image& image) {
  const Image* one[] = {&image};
  return to_tensor(one);
}

nn::Tensor masks_to_tensor(std::span<const Mask* const> masks) {
  if (masks.empty()) throw ValidationError("cannot batch zero masks");
  const Mask& first = *masks.front();
  nn::Tensor t(static_cast<int>(masks.size()), 1, first.height, first.width);
  for (std::size_t b = 0; b < masks.size(); ++b) {
    const Mask& m = *masks[b];
    if (m.height != first.height || m.width != first.width) throw ValidationError("batch mixes mask sizes");
    for (std::size_t i = 0; i < m.values.size(); ++i) t.data[b * m.values.size() + i] = m.values[i] ? 1.0 : 0.0;
  }
  return t;
}

}  // namespace sslseg::data
