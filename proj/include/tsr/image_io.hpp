#pragma once

#include <filesystem>

#include "tsr/nn/tensor.hpp"

namespace tsr::io {

/// Reads any PNG as 8-bit RGB scaled to [0, 1], shape [H, W, 3].
nn::Tensor<float> read_png(const std::filesystem::path& path);

/// Writes [H, W, 3] (or [H, W, 1]) values in [0, 1] as an 8-bit PNG. Values
/// are clamped and rounded.
void write_png(const std::filesystem::path& path, const nn::Tensor<float>& image);

/// Bilinear resampling with half-pixel centers. Returns the input unchanged
/// when the size already matches.
nn::Tensor<float> resize_bilinear(const nn::Tensor<float>& image, std::size_t height, std::size_t width);

/// read_png + resize to a square resolution.
nn::Tensor<float> load_image(const std::filesystem::path& path, std::size_t resolution);

}  // namespace tsr::io
