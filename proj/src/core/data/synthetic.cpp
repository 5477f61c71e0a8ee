#include "core/data/synthetic.hpp"

#include "core/common/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sslseg::data {

std::vector<ImageSample> generate_synthetic(const SyntheticOptions& options, std::uint64_t seed) {
  std::vector<ImageSample> out;
  out.reserve(options.count);
  const double s = options.size;
  for (int i = 0; i < options.count; ++i) {
    Rng rng = make_rng(seed, 0x5e7, static_cast<std::uint64_t>(i));
    const double cy = uniform(rng, 0.3, 0.7) * s;
    const double cx = uniform(rng, 0.3, 0.7) * s;
    const double ry = uniform(rng, 0.12, 0.28) * s;
    const double rx = uniform(rng, 0.12, 0.28) * s;
    const double angle = uniform(rng, 0.0, std::numbers::pi);
    const double ca = std::cos(angle), sa = std::sin(angle);
    std::gamma_distribution<double> speckle(options.speckle_shape, 1.0 / options.speckle_shape);

    ImageSample sample;
    sample.id = fmt::format("synth_{:04d}", i);
    sample.source = Source::kSynthetic;
    sample.pixels = Image(options.size, options.size, 3);
    sample.mask = Mask(options.size, options.size);
    for (int y = 0; y < options.size; ++y) {
      for (int x = 0; x < options.size; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        const double u = (dx * ca + dy * sa) / rx;
        const double v = (-dx * sa + dy * ca) / ry;
        const bool inside = u * u + v * v <= 1.0;
        const double base = inside ? options.lesion : options.background;
        const double value = std::clamp(base * speckle(rng), 0.0, 1.0);
        for (int c = 0; c < 3; ++c) sample.pixels.at(y, x, c) = value;
        sample.mask->at(y, x) = inside ? 1 : 0;
      }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace sslseg::data
