#pragma once

#include "core/data/datasets.hpp"
#include "core/nn/tensor.hpp"

#include <span>

namespace sslseg::data {

// HWC images of one size -> NCHW tensor.
nn::Tensor to_tensor(std::span<const Image* const> images);
nn::Tensor to_tensor(const Image& image);
// Binary masks -> [B, 1, H, W] targets.
nn::Tensor masks_to_tensor(std::span<const Mask* const> masks);

}  // namespace sslseg::data
