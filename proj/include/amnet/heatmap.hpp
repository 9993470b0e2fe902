#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "amnet/data.hpp"

namespace amnet {

/// Renders one attention map (W·H weights, location index row·W + col) as an
/// 8-bit image: min-max scaled to [0,255], then bilinearly upscaled to
/// size×size. A constant map has no range and renders black.
inline GrayImage render_attention_map(std::span<const double> alpha, std::size_t W, std::size_t H,
                                      std::size_t size = kCropSize) {
  if (alpha.size() != W * H)
    throw DimensionError("attention map has " + std::to_string(alpha.size()) + " entries for a " + std::to_string(W) +
                         "x" + std::to_string(H) + " grid");
  const auto [lo_it, hi_it] = std::minmax_element(alpha.begin(), alpha.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  std::vector<double> scaled(alpha.size(), 0.0);
  if (range > 0.0)
    for (std::size_t i = 0; i < alpha.size(); ++i) scaled[i] = 255.0 * (alpha[i] - lo) / range;
  const auto up = resize_bilinear(scaled, H, W, 1, size, size);
  GrayImage img{size, size, std::vector<std::uint8_t>(size * size)};
  for (std::size_t i = 0; i < up.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(up[i], 0.0, 255.0)));
  return img;
}

}  // namespace amnet
