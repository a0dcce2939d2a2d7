#include <filesystem>

#include "doctest.h"
#include "wsipipe/png_io.hpp"
#include "wsipipe/rng.hpp"
#include "wsipipe/slide_store.hpp"
#include "wsipipe/tiler.hpp"
#include "wsipipe/tissue_seg.hpp"

using namespace wsipipe;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("wsipipe_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ImageRGB noise_image(std::uint64_t seed, int w, int h) {
  Rng rng(seed);
  ImageRGB img(w, h);
  for (auto& b : img.data) b = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST_CASE("pyramid levels halve while the short side stays >= 299") {
  const SlidePyramid p = build_pyramid(noise_image(1, 1500, 640), 0.4536, "s1");
  REQUIRE(p.num_levels() == 2);
  CHECK(p.levels[1].width == 750);
  CHECK(p.levels[1].height == 320);
  CHECK(p.levels[1] == pool2x2(p.levels[0]));
  const SlidePyramid tiny = build_pyramid(noise_image(2, 300, 300), 0.4536, "s2");
  CHECK(tiny.num_levels() == 1);
}

TEST_CASE("read_region is lossless and guards its bounds") {
  const SlidePyramid p = build_pyramid(noise_image(3, 640, 400), 0.4536, "s");
  const ImageRGB r = read_region(p, 0, 10, 20, 30, 40);
  CHECK(r.width == 30);
  CHECK(r.height == 40);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 30; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(r.at(x, y, c) == p.levels[0].at(10 + x, 20 + y, c));
  CHECK_THROWS_AS(read_region(p, 5, 0, 0, 10, 10), InvalidLevel);
  CHECK_THROWS_AS(read_region(p, 0, 630, 0, 20, 10), RegionOutOfBounds);
  CHECK_THROWS_AS(read_region(p, 0, -1, 0, 10, 10), RegionOutOfBounds);
}

TEST_CASE("pyramid save/load round trip") {
  const fs::path dir = temp_dir("pyramid");
  const SlidePyramid p = build_pyramid(noise_image(4, 600, 320), 0.25, "abc", "40X");
  save_pyramid(p, dir / "abc");
  const SlidePyramid q = load_pyramid(dir / "abc");
  CHECK(q.slide_id == p.slide_id);
  CHECK(q.mpp == doctest::Approx(p.mpp));
  CHECK(q.magnification == p.magnification);
  REQUIRE(q.num_levels() == p.num_levels());
  for (int k = 0; k < p.num_levels(); ++k) CHECK(q.levels[k] == p.levels[k]);
  fs::remove_all(dir);
}

TEST_CASE("png round trips preserve every pixel") {
  const fs::path dir = temp_dir("png");
  const ImageRGB img = noise_image(5, 37, 23);
  write_png(dir / "a.png", img);
  CHECK(read_png_rgb(dir / "a.png") == img);
  ImageGray g(17, 9);
  Rng rng(6);
  for (auto& b : g.data) b = static_cast<std::uint8_t>(rng.below(256));
  write_png(dir / "g.png", g);
  CHECK(read_png_gray(dir / "g.png") == g);
  BinaryMask m(21, 13, 0);
  for (auto& b : m.data) b = rng.bernoulli(0.4) ? 1 : 0;
  write_png(dir / "m.png", m);
  CHECK(read_png_mask(dir / "m.png") == m);
  fs::remove_all(dir);
}

TEST_CASE("synthetic slides are deterministic in the seed") {
  SyntheticCohortSpec spec;
  spec.slide_width = 640;
  spec.slide_height = 320;
  const ImageRGB a = render_synthetic_slide(spec, 42, 1);
  const ImageRGB b = render_synthetic_slide(spec, 42, 1);
  const ImageRGB c = render_synthetic_slide(spec, 43, 1);
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("synthetic tissue survives segmentation and blur QC") {
  SyntheticCohortSpec spec;
  spec.slide_width = 1500;
  spec.slide_height = 640;
  spec.pen_mark_prob = 0.0;
  spec.blur_region_prob = 0.0;
  const SlidePyramid p =
      build_pyramid(render_synthetic_slide(spec, 7, 0), spec.mpp, "s");
  const TissueMask mask = compute_tissue_mask(p);
  double frac = 0.0;
  for (auto v : mask.grid.data) frac += v;
  frac /= static_cast<double>(mask.grid.data.size());
  CHECK(frac > 0.15);  // a visible core survives the morphology
  const auto tiles = plan_tiles(p, mask);
  int passed = 0;
  for (const auto& t : tiles) passed += t.qc_pass ? 1 : 0;
  CHECK(passed >= 2);
}

TEST_CASE("cohort generation writes slides and a manifest") {
  const fs::path dir = temp_dir("cohort");
  SyntheticCohortSpec spec;
  spec.n_patients = 4;
  spec.cores_per_patient = 2;
  spec.slide_width = 640;
  spec.slide_height = 320;
  const SyntheticCohort cohort = generate_synthetic_cohort(spec, dir);
  CHECK(cohort.patients.size() == 4);
  CHECK(cohort.slide_ids.size() == 8);
  CHECK(fs::exists(dir / "cohort.csv"));
  for (const auto& sid : cohort.slide_ids) {
    CHECK(fs::exists(dir / "slides" / sid / "manifest.json"));
  }
  // Half the patients carry a cancer-adjacent label at the default balance.
  int positives = 0;
  for (const auto& p : cohort.patients) positives += p.diagnosis;
  CHECK(positives == 2);
  fs::remove_all(dir);
}
