#include <array>

#include "doctest.h"
#include "oracles.hpp"
#include "wsipipe/image.hpp"
#include "wsipipe/rng.hpp"
#include "wsipipe/tiler.hpp"
#include "wsipipe/tissue_seg.hpp"

using namespace wsipipe;

namespace {

ImageRGB random_image(Rng& rng, int w, int h) {
  ImageRGB img(w, h);
  for (auto& b : img.data) b = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST_CASE("rgb_to_hsv hexcone basics") {
  CHECK(rgb_to_hsv(255, 0, 0)[0] == doctest::Approx(0.0));
  CHECK(rgb_to_hsv(0, 255, 0)[0] == doctest::Approx(1.0 / 3.0));
  CHECK(rgb_to_hsv(0, 0, 255)[0] == doctest::Approx(2.0 / 3.0));
  const auto gray = rgb_to_hsv(128, 128, 128);
  CHECK(gray[1] == 0.0);
  CHECK(gray[2] == doctest::Approx(128.0 / 255.0));
  // Magenta-ish pink wraps into the upper hue range.
  CHECK(rgb_to_hsv(204, 142, 176)[0] > 0.75);
}

TEST_CASE("otsu matches the exhaustive search") {
  Rng rng(101);
  for (int trial = 0; trial < 300; ++trial) {
    std::array<std::uint64_t, 256> hist{};
    const int bins = 1 + static_cast<int>(rng.below(40));
    for (int b = 0; b < bins; ++b)
      hist[rng.below(256)] += rng.below(200);
    std::uint64_t total = 0;
    for (auto v : hist) total += v;
    if (total == 0) continue;
    CHECK(otsu_threshold(hist) == oracle::otsu_exhaustive(hist));
  }
  CHECK_THROWS_AS(otsu_threshold(std::array<std::uint64_t, 256>{}), InvalidInput);
  // Single occupied bin: that bin is returned.
  std::array<std::uint64_t, 256> single{};
  single[42] = 7;
  CHECK(otsu_threshold(single) == 42);
}

TEST_CASE("pen mask matches the naive Laplacian loop") {
  Rng rng(103);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 3 + static_cast<int>(rng.below(30));
    const int h = 3 + static_cast<int>(rng.below(30));
    const ImageRGB img = random_image(rng, w, h);
    const int threshold = 1 + static_cast<int>(rng.below(60));
    CHECK(pen_mark_mask(img, threshold) == oracle::pen_mask_naive(img, threshold));
  }
  // Border pixels are never flagged even on a flat image.
  const BinaryMask flat = pen_mark_mask(ImageRGB(5, 5, 100), 20);
  CHECK(flat.at(0, 0) == 0);
  CHECK(flat.at(2, 2) == 1);
}

TEST_CASE("variance of Laplacian matches the naive loop") {
  Rng rng(107);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 3 + static_cast<int>(rng.below(40));
    const int h = 3 + static_cast<int>(rng.below(40));
    const ImageGray g = to_gray(random_image(rng, w, h));
    CHECK(variance_of_laplacian(g) ==
          doctest::Approx(oracle::variance_of_laplacian_naive(g)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(variance_of_laplacian(ImageGray(2, 5)), InvalidInput);
}

TEST_CASE("pool2x2 matches the double loop, odd edges included") {
  Rng rng(109);
  for (int trial = 0; trial < 60; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(13));
    const int h = 1 + static_cast<int>(rng.below(13));
    const ImageRGB img = random_image(rng, w, h);
    CHECK(pool2x2(img) == oracle::pool2x2_naive(img));
  }
}

TEST_CASE("dihedral transforms form the full orbit") {
  Rng rng(113);
  const ImageRGB img = random_image(rng, 6, 6);
  std::vector<ImageRGB> orbit;
  for (int k = 0; k < 8; ++k) orbit.push_back(dihedral(img, k));
  CHECK(orbit[0] == img);
  for (int i = 0; i < 8; ++i)
    for (int j = i + 1; j < 8; ++j) CHECK_FALSE(orbit[i] == orbit[j]);
  // Two quarter turns compose to a half turn.
  CHECK(dihedral(dihedral(img, 1), 1) == dihedral(img, 2));
  CHECK_THROWS_AS(dihedral(random_image(rng, 3, 4), 0), InvalidInput);
  CHECK_THROWS_AS(dihedral(img, 8), InvalidInput);
}

TEST_CASE("area_resize: integer factor equals repeated box averaging footprint") {
  ImageRGB img(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = static_cast<std::uint8_t>(16 * y + 4 * x);
  const ImageRGB half = area_resize(img, 2.0);
  CHECK(half.width == 2);
  CHECK(half.height == 2);
  // Mean of {0,4,16,20} = 10.
  CHECK(half.at(0, 0, 0) == 10);
  CHECK_THROWS_AS(area_resize(img, 0.5), InvalidInput);
}

TEST_CASE("morphological smooth removes speckle and fills pinholes") {
  BinaryMask m(40, 40, 1);
  m.at(20, 20) = 0;           // pinhole
  BinaryMask sparse(40, 40, 0);
  sparse.at(5, 5) = 1;        // isolated speck
  const BinaryMask filled = morphological_smooth(m, 3);
  const BinaryMask cleaned = morphological_smooth(sparse, 3);
  CHECK(filled.at(20, 20) == 1);
  for (auto v : cleaned.data) CHECK(v == 0);
}

TEST_CASE("tissue_fraction counts mask-cell centers inside the window") {
  TissueMask m;
  m.scale = 5.0;
  m.slide_id = "s";
  m.grid = BinaryMask(10, 10, 0);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 5; ++x) m.grid.at(x, y) = 1;  // left half tissue
  // Window [0,25) covers mask cells 0..4 in each axis: centers 2.5..22.5.
  CHECK(tissue_fraction(m, 0, 0, 25) == doctest::Approx(1.0));
  CHECK(tissue_fraction(m, 0, 0, 50) == doctest::Approx(0.5));
  CHECK(tissue_fraction(m, 25, 0, 25) == doctest::Approx(0.0));
  CHECK_THROWS_AS(tissue_fraction(m, 40, 0, 25), RegionOutOfBounds);
}
