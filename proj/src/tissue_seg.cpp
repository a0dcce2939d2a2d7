#include "wsipipe/tissue_seg.hpp"

#include <algorithm>
#include <cmath>

namespace wsipipe {

std::array<double, 3> rgb_to_hsv(std::uint8_t r8, std::uint8_t g8,
                                 std::uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double maxc = std::max({r, g, b});
  const double minc = std::min({r, g, b});
  const double delta = maxc - minc;
  double h = 0.0;
  if (delta > 0.0) {
    if (maxc == r)
      h = (g - b) / delta;
    else if (maxc == g)
      h = 2.0 + (b - r) / delta;
    else
      h = 4.0 + (r - g) / delta;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  const double s = maxc > 0.0 ? delta / maxc : 0.0;
  return {h, s, maxc};
}

int otsu_threshold(const std::array<std::uint64_t, 256>& hist) {
  std::uint64_t total = 0, weighted_total = 0;
  for (int i = 0; i < 256; ++i) {
    total += hist[i];
    weighted_total += static_cast<std::uint64_t>(i) * hist[i];
  }
  if (total == 0) throw InvalidInput("otsu_threshold: empty histogram");

  // Between-class variance is proportional to (sum0*w1 - sum1*w0)^2/(w0*w1).
  // Comparing candidates by cross-multiplication in 128-bit integers keeps
  // the argmax exact (no floating-point ties) for any realistic mask size.
  using u128 = unsigned __int128;
  int best_t = -1;
  u128 best_num = 0;     // a^2
  std::uint64_t best_den = 1;  // w0*w1
  std::uint64_t w0 = 0, sum0 = 0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    sum0 += static_cast<std::uint64_t>(t) * hist[t];
    const std::uint64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const std::uint64_t sum1 = weighted_total - sum0;
    const __int128 a = static_cast<__int128>(sum0) * w1 -
                       static_cast<__int128>(sum1) * w0;
    const u128 num = static_cast<u128>(a < 0 ? -a : a) *
                     static_cast<u128>(a < 0 ? -a : a);
    const std::uint64_t den = w0 * w1;
    if (best_t < 0 || num * best_den > best_num * den) {
      best_t = t;
      best_num = num;
      best_den = den;
    }
  }
  if (best_t < 0) {
    // Single occupied bin: no separation exists, return that bin.
    for (int t = 0; t < 256; ++t)
      if (hist[t] > 0) return t;
  }
  return best_t;
}

BinaryMask pen_mark_mask(const ImageRGB& rgb, int abs_laplacian_threshold) {
  if (rgb.empty()) throw InvalidInput("pen_mark_mask: empty raster");
  const ImageGray gray = to_gray(rgb);
  BinaryMask mask(rgb.width, rgb.height, 0);
  for (int y = 1; y + 1 < gray.height; ++y)
    for (int x = 1; x + 1 < gray.width; ++x) {
      const int resp = gray.at(x - 1, y) + gray.at(x + 1, y) +
                       gray.at(x, y - 1) + gray.at(x, y + 1) -
                       4 * gray.at(x, y);
      const int sat = std::min(std::abs(resp), 255);
      if (sat < abs_laplacian_threshold) mask.at(x, y) = 1;
    }
  return mask;
}

BinaryMask morphological_smooth(const BinaryMask& mask, int radius) {
  // Disk structuring element offsets.
  std::vector<std::pair<int, int>> disk;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) disk.emplace_back(dx, dy);

  // Work on a canvas padded by the radius so dilation never clips; outside
  // the canvas everything is background.
  const int pad = radius;
  const int pw = mask.width + 2 * pad, ph = mask.height + 2 * pad;
  BinaryMask canvas(pw, ph, 0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      canvas.at(x + pad, y + pad) = mask.at(x, y) ? 1 : 0;

  auto erode = [&](const BinaryMask& in) {
    BinaryMask out(pw, ph, 0);
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        bool all = true;
        for (const auto& [dx, dy] : disk) {
          const int sx = x + dx, sy = y + dy;
          if (sx < 0 || sy < 0 || sx >= pw || sy >= ph || !in.at(sx, sy)) {
            all = false;
            break;
          }
        }
        out.at(x, y) = all ? 1 : 0;
      }
    return out;
  };
  auto dilate = [&](const BinaryMask& in) {
    BinaryMask out(pw, ph, 0);
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        if (!in.at(x, y)) continue;
        for (const auto& [dx, dy] : disk) {
          const int sx = x + dx, sy = y + dy;
          if (sx >= 0 && sy >= 0 && sx < pw && sy < ph) out.at(sx, sy) = 1;
        }
      }
    return out;
  };

  BinaryMask result = erode(dilate(dilate(erode(canvas))));  // open, then close
  BinaryMask cropped(mask.width, mask.height, 0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      cropped.at(x, y) = result.at(x + pad, y + pad);
  return cropped;
}

TissueMask compute_tissue_mask(const SlidePyramid& p,
                               const SegmentationConfig& cfg) {
  if (p.num_levels() == 0) throw InvalidInput("compute_tissue_mask: empty pyramid");
  const ImageRGB small = area_resize(p.levels[0], cfg.mask_downsample);

  std::array<std::uint64_t, 256> sat_hist{};
  std::vector<std::uint8_t> sat_bytes(static_cast<std::size_t>(small.width) *
                                      small.height);
  std::vector<std::uint8_t> hue_pass(sat_bytes.size());
  for (int y = 0; y < small.height; ++y)
    for (int x = 0; x < small.width; ++x) {
      const auto hsv = rgb_to_hsv(small.at(x, y, 0), small.at(x, y, 1),
                                  small.at(x, y, 2));
      const std::uint8_t sb =
          static_cast<std::uint8_t>(std::lround(hsv[1] * 255.0));
      const std::size_t i = static_cast<std::size_t>(y) * small.width + x;
      sat_bytes[i] = sb;
      hue_pass[i] = hsv[0] > cfg.hue_threshold ? 1 : 0;
      ++sat_hist[sb];
    }
  const int sat_t = otsu_threshold(sat_hist);
  const BinaryMask pen = pen_mark_mask(small, cfg.pen_abs_laplacian_threshold);

  BinaryMask raw(small.width, small.height, 0);
  for (std::size_t i = 0; i < sat_bytes.size(); ++i)
    raw.data[i] = (sat_bytes[i] > sat_t && hue_pass[i] && !pen.data[i]) ? 1 : 0;

  TissueMask out;
  out.grid = morphological_smooth(raw, cfg.disk_radius);
  out.scale = cfg.mask_downsample;
  out.slide_id = p.slide_id;
  return out;
}

}  // namespace wsipipe
