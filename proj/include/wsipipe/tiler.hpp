#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wsipipe/slide_store.hpp"
#include "wsipipe/tissue_seg.hpp"

namespace wsipipe {

struct TilingConfig {
  int window = 598;   // level-0 pixels
  int stride = 299;
  int out_size = 299;
  double min_tissue_fraction = 0.20;
  double min_laplacian_variance = 200.0;
};

struct TileRecord {
  std::string slide_id;
  int x = 0;  // level-0 origin, on the stride grid
  int y = 0;
  int window = 598;
  int out_size = 299;
  double tissue_fraction = 0.0;
  double laplacian_variance = 0.0;
  bool qc_pass = false;
};

// Fraction of mask cells whose center falls inside the level-0 window
// footprint that are set.
double tissue_fraction(const TissueMask& m, int x, int y, int window);

// Population variance of the 3x3 Laplacian response over interior pixels.
double variance_of_laplacian(const ImageGray& gray);

// Full-window grid positions with tissue and blur QC evaluated; extraction
// is deferred to extract_tile.
std::vector<TileRecord> plan_tiles(const SlidePyramid& p, const TissueMask& m,
                                   const TilingConfig& cfg = {});

// Reads window x window at level 0 and 2x2 mean-pools to out_size.
ImageRGB extract_tile(const SlidePyramid& p, const TileRecord& r);

// Persists PNGs named {slide_id}_{x}_{y}.png and appends to a tiles.csv
// index. Failed-QC tiles are indexed but only extracted when requested.
void write_tile_store(const SlidePyramid& p, const std::vector<TileRecord>& records,
                      const std::filesystem::path& dir, bool keep_failed_qc = false);

std::vector<TileRecord> read_tile_index(const std::filesystem::path& tiles_csv);

std::string tile_png_name(const TileRecord& r);

}  // namespace wsipipe
