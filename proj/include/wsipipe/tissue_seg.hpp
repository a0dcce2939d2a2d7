#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "wsipipe/image.hpp"
#include "wsipipe/slide_store.hpp"

namespace wsipipe {

struct SegmentationConfig {
  double mask_downsample = 5.0;
  double hue_threshold = 0.75;
  int pen_abs_laplacian_threshold = 20;
  int disk_radius = 6;
};

struct TissueMask {
  BinaryMask grid;
  double scale = 5.0;  // downsample factor relative to level 0
  std::string slide_id;
};

// Hexcone HSV, channels in [0,255] mapped to h,s,v in [0,1]; h wraps mod 1.
std::array<double, 3> rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// Threshold maximizing between-class variance over classes {<=t, >t}; ties
// resolved toward the smallest t.
int otsu_threshold(const std::array<std::uint64_t, 256>& hist);

// Signed 3x3 Laplacian ([[0,1,0],[1,-4,1],[0,1,0]]) of the rounded-luma
// grayscale with the absolute response saturated to [0,255]. Interior pixels
// whose response falls below the threshold are flagged as pen/smooth; border
// pixels are never flagged.
BinaryMask pen_mark_mask(const ImageRGB& rgb, int abs_laplacian_threshold = 20);

// Binary opening then closing with a discrete disk (center distance <=
// radius), evaluated on an unbounded zero canvas.
BinaryMask morphological_smooth(const BinaryMask& mask, int radius);

TissueMask compute_tissue_mask(const SlidePyramid& p,
                               const SegmentationConfig& cfg = {});

}  // namespace wsipipe
