#pragma once

#include <cstdint>
#include <filesystem>

#include <torch/torch.h>

namespace dinfogan {

// Images here are uint8 [C, H, W] tensors (C = 1 or 3) unless stated otherwise.

torch::Tensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

torch::Tensor read_jpeg(const std::filesystem::path& path);
void write_jpeg(const std::filesystem::path& path, const torch::Tensor& image, int quality = 95);

// Dispatches on the file signature (PNG or JPEG).
torch::Tensor read_image(const std::filesystem::path& path);

// uint8 [0, 255] <-> float [-1, 1]; the uint8 direction rounds and saturates.
torch::Tensor to_unit_range(const torch::Tensor& image_u8);
torch::Tensor to_uint8(const torch::Tensor& image_unit);

// Bilinear resize (antialiased when shrinking).
torch::Tensor resize(const torch::Tensor& image, int64_t height, int64_t width);

// Square center crop of side min(size, H, W).
torch::Tensor center_crop(const torch::Tensor& image, int64_t size);

// Lays out float images [N, C, H, W] in [-1, 1] row-major into one uint8
// [C, rows*H, cols*W] canvas; missing tiles stay black.
torch::Tensor tile_grid(const torch::Tensor& images, int64_t rows, int64_t cols);

}  // namespace dinfogan
