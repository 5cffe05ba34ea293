#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rgan/tensor.hpp"

namespace rgan {

/// Interleaved 8-bit image, row-major. channels is 3 (RGB) or 1 (gray).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * channels +
                static_cast<std::size_t>(c)];
  }
};

/// Decodes any PNG to 8-bit RGB (palette expanded, 16-bit narrowed, alpha
/// stripped, gray promoted).
Image8 read_png_rgb(const std::filesystem::path& path);
/// Decodes to single-channel 8-bit gray (for masks).
Image8 read_png_gray(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& img);

/// [0,255] bytes -> [-1,1] planar tensor [3,H,W].
Tensor rgb8_to_unit(const Image8& img);
/// Inverse mapping, rounding half up and clamping to [0,255].
Image8 unit_to_rgb8(const Tensor& t);

// Plain (tape-free) transforms on [3,H,W] float images.
Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);
Tensor rotate_bilinear(const Tensor& img, double angle_radians, float fill);
Tensor flip_horizontal(const Tensor& img);
Tensor flip_vertical(const Tensor& img);
Tensor center_crop_square(const Tensor& img);

}  // namespace rgan
