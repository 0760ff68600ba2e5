#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hemodet/errors.hpp"
#include "hemodet/tensor.hpp"

namespace hemodet {

/// 8-bit interleaved image, row-major; channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
  long height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(long h, long w, long c)
      : height(h), width(w), channels(c), pixels(static_cast<size_t>(h * w * c), 0) {}

  std::uint8_t& at(long y, long x, long c) {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(long y, long x, long c) const {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

/// [C,H,W] tensor in [0,1] <-> 8-bit image (values clamped on the way out).
nn::Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const nn::Tensor& t);

/// Mask files: any channel count accepted, first channel thresholded at >=128.
/// Returned tensor is [H,W] with values 0/1.
nn::Tensor read_mask_png(const std::string& path);
void write_mask_png(const std::string& path, const nn::Tensor& mask01);

// ---- drawing on RGB images ----
void set_pixel(ImageU8& img, long x, long y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
void draw_line(ImageU8& img, long x0, long y0, long x1, long y1, std::uint8_t r,
               std::uint8_t g, std::uint8_t b);
void draw_cross(ImageU8& img, long x, long y, long arm, std::uint8_t r, std::uint8_t g,
                std::uint8_t b);
void draw_circle(ImageU8& img, long cx, long cy, long radius, std::uint8_t r, std::uint8_t g,
                 std::uint8_t b);
/// Alpha-blends color into pixels where mask01 (H,W, values >0.5) is set.
void blend_mask(ImageU8& img, const nn::Tensor& mask01, std::uint8_t r, std::uint8_t g,
                std::uint8_t b, double alpha);
/// 3x5 bitmap font covering digits, '.', '-', '+', 'e', '%', ':' and space;
/// scale multiplies the glyph size.
void draw_text(ImageU8& img, long x, long y, const std::string& text, std::uint8_t r,
               std::uint8_t g, std::uint8_t b, long scale = 1);

}  // namespace hemodet
