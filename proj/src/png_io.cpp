#include "wsipipe/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace wsipipe {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const char* what) {
  throw InvalidInput(std::string(what) + ": " + path.string());
}

void write_rows(const std::filesystem::path& path, int width, int height,
                int bit_depth, int color_type,
                const std::vector<png_bytep>& rows) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) fail(path, "cannot open for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "libpng write error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth < 8) png_set_packing(png);
  png_write_image(png, const_cast<png_bytep*>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

Decoded read_any(const std::filesystem::path& path, bool want_rgb) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) fail(path, "cannot open for reading");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "libpng read error");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  png_set_expand_gray_1_2_4_to_8(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (want_rgb && (color == PNG_COLOR_TYPE_GRAY ||
                   color == PNG_COLOR_TYPE_GRAY_ALPHA))
    png_set_gray_to_rgb(png);
  if (!want_rgb && (color == PNG_COLOR_TYPE_RGB ||
                    color == PNG_COLOR_TYPE_RGB_ALPHA ||
                    color == PNG_COLOR_TYPE_PALETTE))
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  Decoded out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = want_rgb ? 3 : 1;
  out.data.resize(static_cast<std::size_t>(out.width) * out.height *
                  out.channels);
  std::vector<png_bytep> rows(out.height);
  for (int y = 0; y < out.height; ++y)
    rows[y] = out.data.data() +
              static_cast<std::size_t>(y) * out.width * out.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageRGB& img) {
  if (img.empty()) fail(path, "refusing to write empty raster");
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.data.data() +
                                    static_cast<std::size_t>(y) * img.width * 3);
  write_rows(path, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, rows);
}

void write_png(const std::filesystem::path& path, const ImageGray& img) {
  if (img.width == 0 || img.height == 0) fail(path, "refusing to write empty raster");
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.data.data() +
                                    static_cast<std::size_t>(y) * img.width);
  write_rows(path, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY, rows);
}

void write_png(const std::filesystem::path& path, const BinaryMask& mask) {
  if (mask.width == 0 || mask.height == 0)
    fail(path, "refusing to write empty mask");
  // libpng packs one byte per pixel down to 1 bit when packing is enabled.
  std::vector<std::uint8_t> bytes(mask.data.size());
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    bytes[i] = mask.data[i] ? 1 : 0;
  std::vector<png_bytep> rows(mask.height);
  for (int y = 0; y < mask.height; ++y)
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * mask.width;
  write_rows(path, mask.width, mask.height, 1, PNG_COLOR_TYPE_GRAY, rows);
}

ImageRGB read_png_rgb(const std::filesystem::path& path) {
  Decoded d = read_any(path, true);
  ImageRGB img(d.width, d.height);
  img.data = std::move(d.data);
  return img;
}

ImageGray read_png_gray(const std::filesystem::path& path) {
  Decoded d = read_any(path, false);
  ImageGray img(d.width, d.height);
  img.data = std::move(d.data);
  return img;
}

BinaryMask read_png_mask(const std::filesystem::path& path) {
  Decoded d = read_any(path, false);
  BinaryMask m(d.width, d.height);
  for (std::size_t i = 0; i < d.data.size(); ++i) m.data[i] = d.data[i] ? 1 : 0;
  return m;
}

}  // namespace wsipipe
