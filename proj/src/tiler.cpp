#include "wsipipe/tiler.hpp"

#include <cmath>
#include <fstream>

#include "wsipipe/csv.hpp"
#include "wsipipe/png_io.hpp"

namespace wsipipe {

double tissue_fraction(const TissueMask& m, int x, int y, int window) {
  const double scale = m.scale;
  // Mask cell (mi, mj) has its center at level-0 ((mi+0.5)*scale, ...).
  // Center inside [x, x+window) <=> mi in [ceil(x/scale - 0.5), ...).
  auto first_index = [scale](int lo) {
    return static_cast<int>(std::ceil(lo / scale - 0.5));
  };
  auto last_index = [scale](int hi) {  // exclusive
    const double v = hi / scale - 0.5;
    const double c = std::ceil(v);
    return static_cast<int>(c == v ? c + 1 : c);  // center strictly inside
  };
  const int mi0 = std::max(0, first_index(x));
  const int mi1 = last_index(x + window);
  const int mj0 = std::max(0, first_index(y));
  const int mj1 = last_index(y + window);
  if (mi1 > m.grid.width || mj1 > m.grid.height || mi0 >= mi1 || mj0 >= mj1)
    throw RegionOutOfBounds("tissue_fraction: footprint outside mask extent");
  std::uint64_t set = 0, count = 0;
  for (int mj = mj0; mj < mj1; ++mj)
    for (int mi = mi0; mi < mi1; ++mi) {
      ++count;
      set += m.grid.at(mi, mj) ? 1 : 0;
    }
  return static_cast<double>(set) / static_cast<double>(count);
}

double variance_of_laplacian(const ImageGray& gray) {
  if (gray.width < 3 || gray.height < 3)
    throw InvalidInput("variance_of_laplacian: raster smaller than 3x3");
  double sum = 0.0, sum_sq = 0.0;
  std::uint64_t n = 0;
  for (int y = 1; y + 1 < gray.height; ++y)
    for (int x = 1; x + 1 < gray.width; ++x) {
      const double resp = gray.at(x - 1, y) + gray.at(x + 1, y) +
                          gray.at(x, y - 1) + gray.at(x, y + 1) -
                          4.0 * gray.at(x, y);
      sum += resp;
      sum_sq += resp * resp;
      ++n;
    }
  const double mean = sum / n;
  return sum_sq / n - mean * mean;
}

std::vector<TileRecord> plan_tiles(const SlidePyramid& p, const TissueMask& m,
                                   const TilingConfig& cfg) {
  if (m.slide_id != p.slide_id)
    throw InvalidInput("plan_tiles: mask does not belong to this slide");
  std::vector<TileRecord> records;
  const int w0 = p.width0(), h0 = p.height0();
  if (w0 < cfg.window || h0 < cfg.window) return records;
  for (int y = 0; y + cfg.window <= h0; y += cfg.stride)
    for (int x = 0; x + cfg.window <= w0; x += cfg.stride) {
      TileRecord r;
      r.slide_id = p.slide_id;
      r.x = x;
      r.y = y;
      r.window = cfg.window;
      r.out_size = cfg.out_size;
      r.tissue_fraction = tissue_fraction(m, x, y, cfg.window);
      const ImageRGB win = read_region(p, 0, x, y, cfg.window, cfg.window);
      r.laplacian_variance = variance_of_laplacian(to_gray(win));
      r.qc_pass = r.tissue_fraction > cfg.min_tissue_fraction &&
                  r.laplacian_variance >= cfg.min_laplacian_variance;
      records.push_back(std::move(r));
    }
  return records;
}

ImageRGB extract_tile(const SlidePyramid& p, const TileRecord& r) {
  const ImageRGB win = read_region(p, 0, r.x, r.y, r.window, r.window);
  return pool2x2(win);
}

std::string tile_png_name(const TileRecord& r) {
  return r.slide_id + "_" + std::to_string(r.x) + "_" + std::to_string(r.y) +
         ".png";
}

void write_tile_store(const SlidePyramid& p, const std::vector<TileRecord>& records,
                      const std::filesystem::path& dir, bool keep_failed_qc) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path index = dir / "tiles.csv";
  const bool fresh = !std::filesystem::exists(index);
  std::ofstream out(index, std::ios::app);
  if (!out) throw InvalidInput("write_tile_store: cannot write " + index.string());
  if (fresh)
    out << "slide_id,x,y,window,out_size,tissue_fraction,laplacian_variance,"
           "qc_pass\n";
  for (const TileRecord& r : records) {
    if (r.qc_pass || keep_failed_qc) write_png(dir / tile_png_name(r), extract_tile(p, r));
    out << r.slide_id << ',' << r.x << ',' << r.y << ',' << r.window << ','
        << r.out_size << ',' << fmt_double(r.tissue_fraction, 6) << ','
        << fmt_double(r.laplacian_variance, 6) << ',' << (r.qc_pass ? 1 : 0)
        << '\n';
  }
}

std::vector<TileRecord> read_tile_index(const std::filesystem::path& tiles_csv) {
  const CsvTable table = read_csv(tiles_csv);
  std::vector<TileRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    TileRecord r;
    r.slide_id = table.cell(i, "slide_id");
    r.x = std::stoi(table.cell(i, "x"));
    r.y = std::stoi(table.cell(i, "y"));
    r.window = std::stoi(table.cell(i, "window"));
    r.out_size = std::stoi(table.cell(i, "out_size"));
    r.tissue_fraction = std::stod(table.cell(i, "tissue_fraction"));
    r.laplacian_variance = std::stod(table.cell(i, "laplacian_variance"));
    r.qc_pass = table.cell(i, "qc_pass") == "1";
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace wsipipe
