#include "wsipipe/slide_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "wsipipe/csv.hpp"
#include "wsipipe/png_io.hpp"
#include "wsipipe/rng.hpp"

namespace wsipipe {

namespace {
constexpr int kMinLevelDim = 299;
}

SlidePyramid build_pyramid(ImageRGB base, double mpp,
                           const std::string& slide_id,
                           const std::string& magnification) {
  if (base.empty()) throw InvalidInput("build_pyramid: empty raster");
  if (mpp <= 0) throw InvalidInput("build_pyramid: mpp must be positive");
  SlidePyramid p;
  p.slide_id = slide_id;
  p.mpp = mpp;
  p.magnification = magnification;
  p.levels.push_back(std::move(base));
  while (true) {
    const ImageRGB& prev = p.levels.back();
    const int nw = (prev.width + 1) / 2;
    const int nh = (prev.height + 1) / 2;
    if (std::min(nw, nh) < kMinLevelDim) break;
    p.levels.push_back(pool2x2(prev));
  }
  return p;
}

ImageRGB read_region(const SlidePyramid& p, int level, int x, int y, int w,
                     int h) {
  if (level < 0 || level >= p.num_levels())
    throw InvalidLevel("read_region: unknown level " + std::to_string(level));
  const ImageRGB& src = p.levels[level];
  if (w <= 0 || h <= 0 || x < 0 || y < 0 || x + w > src.width ||
      y + h > src.height)
    throw RegionOutOfBounds("read_region: window outside level dimensions");
  ImageRGB out(w, h);
  for (int row = 0; row < h; ++row) {
    const std::uint8_t* s =
        src.data.data() + (static_cast<std::size_t>(y + row) * src.width + x) * 3;
    std::uint8_t* d = out.data.data() + static_cast<std::size_t>(row) * w * 3;
    std::copy(s, s + static_cast<std::size_t>(w) * 3, d);
  }
  return out;
}

void save_pyramid(const SlidePyramid& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["slide_id"] = p.slide_id;
  manifest["width0"] = p.width0();
  manifest["height0"] = p.height0();
  manifest["mpp"] = p.mpp;
  manifest["magnification"] = p.magnification;
  manifest["levels"] = nlohmann::json::array();
  for (int k = 0; k < p.num_levels(); ++k) {
    const std::string file = "level_" + std::to_string(k) + ".png";
    manifest["levels"].push_back({{"factor", 1 << k}, {"file", file}});
    write_png(dir / file, p.levels[k]);
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

SlidePyramid load_pyramid(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw InvalidInput("load_pyramid: no manifest in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(in);
  SlidePyramid p;
  p.slide_id = manifest.at("slide_id").get<std::string>();
  p.mpp = manifest.at("mpp").get<double>();
  p.magnification = manifest.at("magnification").get<std::string>();
  for (const auto& level : manifest.at("levels")) {
    p.levels.push_back(read_png_rgb(dir / level.at("file").get<std::string>()));
  }
  if (p.levels.empty()) throw InvalidInput("load_pyramid: no levels");
  return p;
}

// ---------------------------------------------------------------------------
// Synthetic cohort
// ---------------------------------------------------------------------------

namespace {

// Bilinearly interpolated lattice noise in [-1, 1].
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int width, int height, int cell)
      : cell_(cell),
        nx_(width / cell + 2),
        ny_(height / cell + 2),
        grid_(static_cast<std::size_t>(nx_) * ny_) {
    for (double& v : grid_) v = rng.uniform(-1.0, 1.0);
  }

  double at(int x, int y) const {
    const double fx = static_cast<double>(x) / cell_;
    const double fy = static_cast<double>(y) / cell_;
    const int ix = static_cast<int>(fx);
    const int iy = static_cast<int>(fy);
    const double tx = fx - ix;
    const double ty = fy - iy;
    const double a = g(ix, iy) * (1 - tx) + g(ix + 1, iy) * tx;
    const double b = g(ix, iy + 1) * (1 - tx) + g(ix + 1, iy + 1) * tx;
    return a * (1 - ty) + b * ty;
  }

 private:
  double g(int ix, int iy) const {
    return grid_[static_cast<std::size_t>(std::min(iy, ny_ - 1)) * nx_ +
                 std::min(ix, nx_ - 1)];
  }
  int cell_, nx_, ny_;
  std::vector<double> grid_;
};

std::uint8_t clamp8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void fill_disk(ImageRGB& img, double cx, double cy, double r, std::uint8_t cr,
               std::uint8_t cg, std::uint8_t cb) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + r)));
  const double r2 = r * r;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        img.at(x, y, 0) = cr;
        img.at(x, y, 1) = cg;
        img.at(x, y, 2) = cb;
      }
    }
}

void draw_thick_segment(ImageRGB& img, double x0, double y0, double x1,
                        double y1, double half_width, std::uint8_t cr,
                        std::uint8_t cg, std::uint8_t cb) {
  const int bx0 = std::max(
      0, static_cast<int>(std::floor(std::min(x0, x1) - half_width)));
  const int bx1 = std::min(
      img.width - 1, static_cast<int>(std::ceil(std::max(x0, x1) + half_width)));
  const int by0 = std::max(
      0, static_cast<int>(std::floor(std::min(y0, y1) - half_width)));
  const int by1 = std::min(
      img.height - 1, static_cast<int>(std::ceil(std::max(y0, y1) + half_width)));
  const double vx = x1 - x0, vy = y1 - y0;
  const double len2 = vx * vx + vy * vy;
  const double hw2 = half_width * half_width;
  for (int y = by0; y <= by1; ++y)
    for (int x = bx0; x <= bx1; ++x) {
      double t = len2 > 0 ? ((x - x0) * vx + (y - y0) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double dx = x - (x0 + t * vx), dy = y - (y0 + t * vy);
      if (dx * dx + dy * dy <= hw2) {
        img.at(x, y, 0) = cr;
        img.at(x, y, 1) = cg;
        img.at(x, y, 2) = cb;
      }
    }
}

void box_blur_region(ImageRGB& img, int rx, int ry, int rw, int rh, int radius,
                     int passes) {
  rx = std::max(0, rx);
  ry = std::max(0, ry);
  rw = std::min(rw, img.width - rx);
  rh = std::min(rh, img.height - ry);
  if (rw <= 0 || rh <= 0) return;
  ImageRGB tmp = img;
  for (int pass = 0; pass < passes; ++pass) {
    for (int y = ry; y < ry + rh; ++y)
      for (int x = rx; x < rx + rw; ++x)
        for (int c = 0; c < 3; ++c) {
          int sum = 0, count = 0;
          for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
              const int sx = x + dx, sy = y + dy;
              if (sx < 0 || sy < 0 || sx >= img.width || sy >= img.height)
                continue;
              sum += tmp.at(sx, sy, c);
              ++count;
            }
          img.at(x, y, c) = static_cast<std::uint8_t>((sum + count / 2) / count);
        }
    if (pass + 1 < passes) tmp = img;
  }
}

}  // namespace

ImageRGB render_synthetic_slide(const SyntheticCohortSpec& spec,
                                std::uint64_t slide_seed, int diagnosis) {
  Rng rng(slide_seed);
  const int w = spec.slide_width, h = spec.slide_height;
  ImageRGB img(w, h, 255);

  // Elongated capsule-shaped tissue core with a wavy centerline.
  const double margin = 90.0 + rng.uniform(0.0, 40.0);
  const double x0 = margin, x1 = w - margin;
  const double radius = h * rng.uniform(0.33, 0.40);
  const double wobble_amp = rng.uniform(8.0, 22.0);
  const double wobble_wavelen = rng.uniform(500.0, 900.0);
  const double wobble_phase = rng.uniform(0.0, 6.28318530717958648);

  auto centerline = [&](double x) {
    return h / 2.0 +
           wobble_amp * std::sin(6.28318530717958648 * x / wobble_wavelen +
                                 wobble_phase);
  };
  auto in_core = [&](double x, double y) {
    const double cxx = std::clamp(x, x0, x1);
    const double dy = y - centerline(cxx);
    const double dx = x - cxx;
    return dx * dx + dy * dy <= radius * radius;
  };

  const double s = spec.signal_strength;
  // Class-dependent shifts for cancer-adjacent patients: nuclei density
  // scaled by (1 + 0.4 s), high-frequency noise amplitude raised by 25% s,
  // and a mild hyperchromatic shift of the stroma (green pulled down, blue
  // up), mimicking denser hematoxylin uptake.
  const double density_scale = diagnosis ? 1.0 + 0.4 * s : 1.0;
  const double hf_amp = 10.0 * (diagnosis ? 1.0 + 0.25 * s : 1.0);
  const double chroma = diagnosis ? 6.0 * s : 0.0;

  ValueNoise coarse(rng, w, h, 64);
  ValueNoise fine(rng, w, h, 12);

  // Base stroma: H&E pink with low/medium frequency modulation, a per-pixel
  // luminance noise channel, and a 5-px alternating micro-texture. The
  // micro-texture keeps the luma Laplacian of sharp tissue far from zero
  // even after downsampling, which is what separates stained tissue from
  // flat pen ink (and from defocused regions) under the low-Laplacian
  // filter.
  const double base[3] = {204, 142, 176};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!in_core(x, y)) continue;
      const double checker = ((x / 5 + y / 5) % 2 == 0) ? 8.0 : -8.0;
      const double mod =
          12.0 * coarse.at(x, y) + 10.0 * fine.at(x, y) + checker;
      const double noise = hf_amp * rng.uniform(-1.0, 1.0);
      img.at(x, y, 0) = clamp8(base[0] + mod + noise);
      img.at(x, y, 1) = clamp8(base[1] + mod + noise - chroma);
      img.at(x, y, 2) = clamp8(base[2] + mod + noise + chroma);
    }

  // Glands: bright lumen ringed by epithelial nuclei.
  const double core_area = (x1 - x0) * 2.0 * radius;
  const int n_glands = static_cast<int>(core_area / 2600.0);
  for (int gi = 0; gi < n_glands; ++gi) {
    double gx, gy;
    int tries = 0;
    do {
      gx = rng.uniform(x0 - radius, x1 + radius);
      gy = rng.uniform(0.0, static_cast<double>(h));
    } while (!in_core(gx, gy) && ++tries < 50);
    if (tries >= 50) continue;
    const double lumen_r = rng.uniform(6.0, 14.0);
    fill_disk(img, gx, gy, lumen_r, 246, 240, 246);
    const int n_ring = static_cast<int>(6.28318 * lumen_r / 4.5);
    for (int ni = 0; ni < n_ring; ++ni) {
      const double ang = rng.uniform(0.0, 6.28318530717958648);
      const double rr = lumen_r + rng.uniform(1.5, 4.0);
      fill_disk(img, gx + rr * std::cos(ang), gy + rr * std::sin(ang),
                rng.uniform(1.2, 2.2), 96, 62, 134);
    }
  }

  // Scattered stromal nuclei; density carries the class signal.
  const int n_nuclei = static_cast<int>(core_area / 520.0 * density_scale);
  for (int ni = 0; ni < n_nuclei; ++ni) {
    const double nx = rng.uniform(x0 - radius, x1 + radius);
    const double ny = rng.uniform(0.0, static_cast<double>(h));
    if (!in_core(nx, ny)) continue;
    fill_disk(img, nx, ny, rng.uniform(1.0, 2.0),
              clamp8(96 + rng.uniform(-12, 12)), clamp8(62 + rng.uniform(-10, 10)),
              clamp8(134 + rng.uniform(-12, 12)));
  }

  // Optional saturated pen stroke of near-constant intensity. The purple pen
  // shares the tissue hue band, so only the low-Laplacian filter removes it.
  if (rng.bernoulli(spec.pen_mark_prob)) {
    static constexpr std::uint8_t kPens[3][3] = {
        {198, 42, 178}, {40, 160, 60}, {50, 80, 200}};
    const auto& pen = kPens[rng.below(3)];
    const double px0 = rng.uniform(x0, (x0 + x1) / 2);
    const double py0 = rng.uniform(h * 0.2, h * 0.8);
    const double px1 = px0 + rng.uniform(200.0, 500.0);
    const double py1 = std::clamp(py0 + rng.uniform(-120.0, 120.0), 0.0,
                                  static_cast<double>(h - 1));
    draw_thick_segment(img, px0, py0, px1, py1, rng.uniform(18.0, 26.0), pen[0],
                       pen[1], pen[2]);
  }

  // Optional defocused region.
  if (rng.bernoulli(spec.blur_region_prob)) {
    const int bw = static_cast<int>(rng.uniform(400.0, 700.0));
    const int bh = static_cast<int>(rng.uniform(300.0, 500.0));
    const int bx = static_cast<int>(rng.uniform(x0, std::max(x0 + 1.0, x1 - bw)));
    const int by = static_cast<int>(rng.uniform(0.0, std::max(1.0, h - bh - 1.0)));
    box_blur_region(img, bx, by, bw, bh, 4, 3);
  }

  return img;
}

SyntheticCohort generate_synthetic_cohort(const SyntheticCohortSpec& spec,
                                          const std::filesystem::path& out_dir) {
  if (spec.n_patients < 2)
    throw InvalidInput("generate_synthetic_cohort: need at least 2 patients");
  if (!(spec.class_balance > 0.0 && spec.class_balance < 1.0))
    throw InvalidInput("generate_synthetic_cohort: class_balance must be in (0,1)");

  std::filesystem::create_directories(out_dir / "slides");

  // Deterministic class assignment: shuffle patient indices, the first
  // round(n * balance) become cancer-adjacent.
  const int n_cancer =
      static_cast<int>(std::lround(spec.n_patients * spec.class_balance));
  std::vector<int> order(spec.n_patients);
  for (int i = 0; i < spec.n_patients; ++i) order[i] = i;
  Rng assign_rng(derive_seed(spec.seed, "cohort.assign"));
  assign_rng.shuffle(order);
  std::vector<int> diagnosis(spec.n_patients, 0);
  for (int i = 0; i < n_cancer; ++i) diagnosis[order[i]] = 1;

  SyntheticCohort cohort;
  std::vector<std::vector<std::string>> csv_rows;
  int slide_index = 0;
  for (int i = 0; i < spec.n_patients; ++i) {
    Rng prng(derive_seed(spec.seed, "cohort.patient", static_cast<std::uint64_t>(i)));
    CohortPatient pat;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "P%04d", i);
    pat.patient_id = idbuf;
    pat.diagnosis = diagnosis[i];
    pat.age_years = std::round(prng.uniform(50.0, 75.0) * 10.0) / 10.0;
    pat.psa_ng_ml =
        std::round(std::clamp(std::exp(prng.normal(1.3, 0.45)), 1.0, 25.0) * 100.0) /
        100.0;
    if (pat.diagnosis) {
      pat.isup = static_cast<int>(prng.uniform_int(1, 5));
      pat.max_cancer_length = std::round(prng.uniform(1.0, 12.0) * 100.0) / 100.0;
      pat.mean_cancer_length =
          std::round(pat.max_cancer_length * prng.uniform(0.2, 0.8) * 100.0) / 100.0;
    }
    for (int core = 0; core < spec.cores_per_patient; ++core, ++slide_index) {
      char sidbuf[48];
      std::snprintf(sidbuf, sizeof(sidbuf), "%s_S%02d", pat.patient_id.c_str(),
                    core);
      const std::string slide_id = sidbuf;
      const std::uint64_t slide_seed = derive_seed(
          spec.seed, "cohort.slide", static_cast<std::uint64_t>(slide_index));
      ImageRGB base = render_synthetic_slide(spec, slide_seed, pat.diagnosis);
      SlidePyramid pyr =
          build_pyramid(std::move(base), spec.mpp, slide_id, "20X");
      const std::filesystem::path slide_dir = out_dir / "slides" / slide_id;
      save_pyramid(pyr, slide_dir);
      pat.slide_ids.push_back(slide_id);
      cohort.slide_ids.push_back(slide_id);
      cohort.slide_patient.push_back(pat.patient_id);
      csv_rows.push_back({pat.patient_id, slide_id,
                          (std::filesystem::path("slides") / slide_id).string(),
                          std::to_string(pat.diagnosis), std::to_string(pat.isup),
                          fmt_double(pat.age_years, 1), fmt_double(pat.psa_ng_ml, 2),
                          fmt_double(pat.mean_cancer_length, 2),
                          fmt_double(pat.max_cancer_length, 2)});
    }
    cohort.patients.push_back(std::move(pat));
  }

  write_csv(out_dir / "cohort.csv",
            {"patient_id", "slide_id", "path", "diagnosis", "isup", "age_years",
             "psa_ng_ml", "mean_cancer_length_mm", "max_cancer_length_mm"},
            csv_rows);
  return cohort;
}

}  // namespace wsipipe
