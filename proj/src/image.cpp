#include "wsipipe/image.hpp"

#include <algorithm>
#include <cmath>

namespace wsipipe {

ImageGray to_gray(const ImageRGB& img) {
  ImageGray out(img.width, img.height);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    out.data[i] = luma(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]);
  }
  return out;
}

ImageRGB pool2x2(const ImageRGB& img) {
  if (img.empty()) throw InvalidInput("pool2x2: empty raster");
  const int ow = (img.width + 1) / 2;
  const int oh = (img.height + 1) / 2;
  ImageRGB out(ow, oh);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int x0 = 2 * ox, y0 = 2 * oy;
      const int xn = std::min(2, img.width - x0);
      const int yn = std::min(2, img.height - y0);
      for (int c = 0; c < 3; ++c) {
        unsigned sum = 0;
        for (int dy = 0; dy < yn; ++dy)
          for (int dx = 0; dx < xn; ++dx) sum += img.at(x0 + dx, y0 + dy, c);
        const unsigned count = static_cast<unsigned>(xn * yn);
        out.at(ox, oy, c) =
            static_cast<std::uint8_t>((sum + count / 2) / count);
      }
    }
  }
  return out;
}

ImageRGB area_resize(const ImageRGB& img, double factor) {
  if (img.empty()) throw InvalidInput("area_resize: empty raster");
  if (factor < 1.0) throw InvalidInput("area_resize: factor must be >= 1");
  const int ow = static_cast<int>(std::ceil(img.width / factor));
  const int oh = static_cast<int>(std::ceil(img.height / factor));
  ImageRGB out(ow, oh);
  for (int oy = 0; oy < oh; ++oy) {
    const double sy0 = oy * factor;
    const double sy1 = std::min((oy + 1) * factor, static_cast<double>(img.height));
    const int iy0 = static_cast<int>(std::floor(sy0));
    const int iy1 = static_cast<int>(std::ceil(sy1));
    for (int ox = 0; ox < ow; ++ox) {
      const double sx0 = ox * factor;
      const double sx1 = std::min((ox + 1) * factor, static_cast<double>(img.width));
      const int ix0 = static_cast<int>(std::floor(sx0));
      const int ix1 = static_cast<int>(std::ceil(sx1));
      double acc[3] = {0, 0, 0};
      double area = 0;
      for (int y = iy0; y < iy1 && y < img.height; ++y) {
        const double wy = std::min(sy1, y + 1.0) - std::max(sy0, static_cast<double>(y));
        if (wy <= 0) continue;
        for (int x = ix0; x < ix1 && x < img.width; ++x) {
          const double wx =
              std::min(sx1, x + 1.0) - std::max(sx0, static_cast<double>(x));
          if (wx <= 0) continue;
          const double w = wx * wy;
          area += w;
          for (int c = 0; c < 3; ++c) acc[c] += w * img.at(x, y, c);
        }
      }
      for (int c = 0; c < 3; ++c) {
        const long v = std::lround(std::floor(acc[c] / area + 0.5));
        out.at(ox, oy, c) =
            static_cast<std::uint8_t>(std::clamp(v, 0L, 255L));
      }
    }
  }
  return out;
}

ImageRGB dihedral(const ImageRGB& img, int which) {
  if (img.width != img.height)
    throw InvalidInput("dihedral: tile must be square");
  if (which < 0 || which > 7) throw InvalidInput("dihedral: index out of range");
  const int n = img.width;
  ImageRGB out(n, n);
  const bool flip = which >= 4;
  const int rot = which % 4;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      int sx = x, sy = y;
      // Invert the output->source mapping: rotation CCW by 90*rot, after an
      // optional horizontal flip of the source.
      for (int r = 0; r < rot; ++r) {
        const int tx = sx;
        sx = n - 1 - sy;
        sy = tx;
      }
      if (flip) sx = n - 1 - sx;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

}  // namespace wsipipe
