#pragma once

#include "core/data/datasets.hpp"

#include <cstdint>
#include <vector>

namespace sslseg::data {

struct SyntheticOptions {
  int count = 200;
  int size = 32;
  double background = 0.25;
  double lesion = 0.75;
  // Shape parameter of the unit-mean gamma speckle; larger is smoother.
  double speckle_shape = 4.0;
};

// Bright rotated ellipse on multiplicative speckle; mask is the ellipse.
// Ids are "synth_0000", "synth_0001", ...
std::vector<ImageSample> generate_synthetic(const SyntheticOptions& options, std::uint64_t seed);

}  // namespace sslseg::data
