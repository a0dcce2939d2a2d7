#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsipipe/image.hpp"

namespace wsipipe {

// Multi-resolution raster for one biopsy core. Level k holds the base
// raster pooled by 2^k (2x2 area average per step); levels are generated
// while their minimum dimension stays >= 299.
struct SlidePyramid {
  std::string slide_id;
  double mpp = 0.4536;  // microns per pixel at level 0
  std::string magnification = "20X";
  std::vector<ImageRGB> levels;  // levels[k] has downsample factor 2^k

  int width0() const { return levels.empty() ? 0 : levels[0].width; }
  int height0() const { return levels.empty() ? 0 : levels[0].height; }
  int num_levels() const { return static_cast<int>(levels.size()); }
};

SlidePyramid build_pyramid(ImageRGB base, double mpp,
                           const std::string& slide_id = "slide",
                           const std::string& magnification = "20X");

// Lossless window read from a stored level. Throws InvalidLevel for an
// unknown level and RegionOutOfBounds if the window overhangs.
ImageRGB read_region(const SlidePyramid& p, int level, int x, int y, int w,
                     int h);

// Directory persistence: manifest.json plus one PNG per level.
void save_pyramid(const SlidePyramid& p, const std::filesystem::path& dir);
SlidePyramid load_pyramid(const std::filesystem::path& dir);

struct SyntheticCohortSpec {
  std::uint64_t seed = 1;
  int n_patients = 60;
  int cores_per_patient = 10;
  double class_balance = 0.5;     // fraction of cancer-adjacent patients
  double signal_strength = 1.0;   // class-dependent texture shift
  double pen_mark_prob = 0.1;
  double blur_region_prob = 0.1;
  double mpp = 0.4536;
  int slide_width = 1500;
  int slide_height = 640;
};

struct CohortPatient {
  std::string patient_id;
  double age_years = 0;
  double psa_ng_ml = 0;
  int diagnosis = 0;  // 0 benign, 1 cancer-adjacent
  int isup = 0;       // 0 for benign
  double mean_cancer_length = 0;  // mm, 0 for benign
  double max_cancer_length = 0;
  std::vector<std::string> slide_ids;
};

struct SyntheticCohort {
  std::vector<CohortPatient> patients;
  // One entry per slide, aligned with the per-patient slide_ids order.
  std::vector<std::string> slide_ids;
  std::vector<std::string> slide_patient;  // owning patient_id per slide
};

// Generates the slides straight to disk (one pyramid directory per slide
// under out_dir) and writes cohort.csv. Pure function of the spec.
SyntheticCohort generate_synthetic_cohort(const SyntheticCohortSpec& spec,
                                          const std::filesystem::path& out_dir);

// Renders one synthetic slide deterministically; used by the generator and
// directly by tests. diagnosis selects the class-dependent texture shift.
ImageRGB render_synthetic_slide(const SyntheticCohortSpec& spec,
                                std::uint64_t slide_seed, int diagnosis);

}  // namespace wsipipe
