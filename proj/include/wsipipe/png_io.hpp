#pragma once

#include <filesystem>

#include "wsipipe/image.hpp"

namespace wsipipe {

void write_png(const std::filesystem::path& path, const ImageRGB& img);
void write_png(const std::filesystem::path& path, const ImageGray& img);
// 1-bit grayscale; any nonzero cell is written as set.
void write_png(const std::filesystem::path& path, const BinaryMask& mask);

ImageRGB read_png_rgb(const std::filesystem::path& path);
ImageGray read_png_gray(const std::filesystem::path& path);
BinaryMask read_png_mask(const std::filesystem::path& path);

}  // namespace wsipipe
