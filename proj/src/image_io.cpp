#include "hemodet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace hemodet {

namespace {

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

ImageU8 read_png(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open png: " + path);
  FileCloser closer{f};

  png_byte header[8];
  if (std::fread(header, 1, 8, f) != 8 || png_sig_cmp(header, 0, 8))
    throw DataError("not a png file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw DataError("png init failure");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png decode failure: " + path);
  }
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("unsupported png channel count in " + path);
  }

  ImageU8 img(static_cast<long>(h), static_cast<long>(w), channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.pixels.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("write_png: channels must be 1 or 3");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot create png: " + path);
  FileCloser closer{f};

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw DataError("png init failure");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png encode failure: " + path);
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_const_bytep> rows(img.height);
  for (long y = 0; y < img.height; ++y)
    rows[y] = img.pixels.data() + static_cast<size_t>(y) * img.width * img.channels;
  png_write_image(png, const_cast<png_bytepp>(const_cast<png_bytep*>(rows.data())));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

nn::Tensor image_to_tensor(const ImageU8& img) {
  nn::Tensor t({img.channels, img.height, img.width});
  for (long c = 0; c < img.channels; ++c)
    for (long y = 0; y < img.height; ++y)
      for (long x = 0; x < img.width; ++x) t.at(c, y, x) = img.at(y, x, c) / 255.0;
  return t;
}

ImageU8 tensor_to_image(const nn::Tensor& t) {
  ImageU8 img(t.dim(1), t.dim(2), t.dim(0));
  for (long c = 0; c < img.channels; ++c)
    for (long y = 0; y < img.height; ++y)
      for (long x = 0; x < img.width; ++x) {
        double v = std::clamp(t.at(c, y, x), 0.0, 1.0);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

nn::Tensor read_mask_png(const std::string& path) {
  ImageU8 img = read_png(path);
  nn::Tensor mask({img.height, img.width});
  for (long y = 0; y < img.height; ++y)
    for (long x = 0; x < img.width; ++x) mask.at(y, x) = img.at(y, x, 0) >= 128 ? 1.0 : 0.0;
  return mask;
}

void write_mask_png(const std::string& path, const nn::Tensor& mask01) {
  ImageU8 img(mask01.dim(0), mask01.dim(1), 1);
  for (long y = 0; y < img.height; ++y)
    for (long x = 0; x < img.width; ++x)
      img.at(y, x, 0) = mask01.at(y, x) > 0.5 ? 255 : 0;
  write_png(path, img);
}

void set_pixel(ImageU8& img, long x, long y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
  img.at(y, x, 0) = r;
  img.at(y, x, 1) = g;
  img.at(y, x, 2) = b;
}

void draw_line(ImageU8& img, long x0, long y0, long x1, long y1, std::uint8_t r,
               std::uint8_t g, std::uint8_t b) {
  long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    set_pixel(img, x0, y0, r, g, b);
    if (x0 == x1 && y0 == y1) break;
    long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_cross(ImageU8& img, long x, long y, long arm, std::uint8_t r, std::uint8_t g,
                std::uint8_t b) {
  draw_line(img, x - arm, y, x + arm, y, r, g, b);
  draw_line(img, x, y - arm, x, y + arm, r, g, b);
}

void draw_circle(ImageU8& img, long cx, long cy, long radius, std::uint8_t r, std::uint8_t g,
                 std::uint8_t b) {
  long x = radius, y = 0, err = 1 - radius;
  while (x >= y) {
    set_pixel(img, cx + x, cy + y, r, g, b);
    set_pixel(img, cx - x, cy + y, r, g, b);
    set_pixel(img, cx + x, cy - y, r, g, b);
    set_pixel(img, cx - x, cy - y, r, g, b);
    set_pixel(img, cx + y, cy + x, r, g, b);
    set_pixel(img, cx - y, cy + x, r, g, b);
    set_pixel(img, cx + y, cy - x, r, g, b);
    set_pixel(img, cx - y, cy - x, r, g, b);
    ++y;
    if (err < 0)
      err += 2 * y + 1;
    else {
      --x;
      err += 2 * (y - x) + 1;
    }
  }
}

void blend_mask(ImageU8& img, const nn::Tensor& mask01, std::uint8_t r, std::uint8_t g,
                std::uint8_t b, double alpha) {
  double col[3] = {static_cast<double>(r), static_cast<double>(g), static_cast<double>(b)};
  for (long y = 0; y < img.height; ++y)
    for (long x = 0; x < img.width; ++x) {
      if (mask01.at(y, x) <= 0.5) continue;
      for (long c = 0; c < 3; ++c) {
        double v = (1.0 - alpha) * img.at(y, x, c) + alpha * col[c];
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
}

namespace {

// 3x5 glyphs, row-major bits (msb = left pixel of the row).
struct Glyph {
  char ch;
  std::uint8_t rows[5];
};

const Glyph kFont[] = {
    {'0', {0b111, 0b101, 0b101, 0b101, 0b111}}, {'1', {0b010, 0b110, 0b010, 0b010, 0b111}},
    {'2', {0b111, 0b001, 0b111, 0b100, 0b111}}, {'3', {0b111, 0b001, 0b111, 0b001, 0b111}},
    {'4', {0b101, 0b101, 0b111, 0b001, 0b001}}, {'5', {0b111, 0b100, 0b111, 0b001, 0b111}},
    {'6', {0b111, 0b100, 0b111, 0b101, 0b111}}, {'7', {0b111, 0b001, 0b010, 0b010, 0b010}},
    {'8', {0b111, 0b101, 0b111, 0b101, 0b111}}, {'9', {0b111, 0b101, 0b111, 0b001, 0b111}},
    {'.', {0b000, 0b000, 0b000, 0b000, 0b010}}, {'-', {0b000, 0b000, 0b111, 0b000, 0b000}},
    {'+', {0b000, 0b010, 0b111, 0b010, 0b000}}, {'e', {0b000, 0b111, 0b110, 0b100, 0b111}},
    {'%', {0b101, 0b001, 0b010, 0b100, 0b101}}, {':', {0b000, 0b010, 0b000, 0b010, 0b000}},
    {' ', {0b000, 0b000, 0b000, 0b000, 0b000}},
};

const Glyph* find_glyph(char c) {
  for (const Glyph& g : kFont)
    if (g.ch == c) return &g;
  return nullptr;
}

}  // namespace

void draw_text(ImageU8& img, long x, long y, const std::string& text, std::uint8_t r,
               std::uint8_t g, std::uint8_t b, long scale) {
  long cx = x;
  for (char c : text) {
    const Glyph* gl = find_glyph(c);
    if (gl) {
      for (long row = 0; row < 5; ++row)
        for (long col = 0; col < 3; ++col)
          if (gl->rows[row] & (0b100 >> col))
            for (long sy = 0; sy < scale; ++sy)
              for (long sx = 0; sx < scale; ++sx)
                set_pixel(img, cx + col * scale + sx, y + row * scale + sy, r, g, b);
    }
    cx += 4 * scale;
  }
}

}  // namespace hemodet
