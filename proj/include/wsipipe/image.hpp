#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "wsipipe/errors.hpp"

namespace wsipipe {

// Interleaved 8-bit RGB raster, row-major.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // size = 3 * width * height

  ImageRGB() = default;
  ImageRGB(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(3) * w * h, fill) {}

  bool empty() const { return width == 0 || height == 0; }

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool operator==(const ImageRGB&) const = default;
};

struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  ImageGray() = default;
  ImageGray(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }

  bool operator==(const ImageGray&) const = default;
};

// Binary grid stored one byte per cell, values strictly 0 or 1.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }

  bool operator==(const BinaryMask&) const = default;
};

// Rounded Rec.601 luma, the grayscale used by both the pen filter and the
// blur QC.
inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  const long v = std::lround(y);
  return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

ImageGray to_gray(const ImageRGB& img);

// 2x2 area-average pooling, integer round-half-up; odd trailing rows or
// columns average the pixels that exist.
ImageRGB pool2x2(const ImageRGB& img);

// Area-average resize by an arbitrary real factor >= 1 (box filter over the
// exact source footprint of each destination pixel), round-half-up.
ImageRGB area_resize(const ImageRGB& img, double factor);

// The eight dihedral transforms of a square raster: index 0..3 rotate by
// 0/90/180/270 degrees CCW, 4..7 additionally flip horizontally first.
ImageRGB dihedral(const ImageRGB& img, int which);

}  // namespace wsipipe
