#pragma once

// Binary greymap (P5, maxval 255) images.

#include <filesystem>
#include <utility>

#include "framepred/tensor.hpp"

namespace framepred {

/// Writes an (H,W) or (H,W,1) image; pixels round(clamp(v,0,1) * 255).
void write_pgm(const Tensor<float>& image, const std::filesystem::path& path);

/// Rescales the image so its own min maps to 0 and max to 255 (a constant
/// image becomes all zero) and writes it. Returns the raw (min, max).
std::pair<float, float> write_pgm_normalized(const Tensor<float>& image, const std::filesystem::path& path);

/// Reads a P5 file with maxval 255 into (H,W,1) values in [0,1].
Tensor<float> read_pgm(const std::filesystem::path& path);

}  // namespace framepred
