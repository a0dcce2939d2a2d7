#pragma once

#include <string>
#include <vector>

#include "wsipipe/errors.hpp"

namespace wsipipe {

// Hierarchical score aggregation: ensemble-mean per tile, percentile
// tile->slide (default 75th), median slide->patient.

struct TileScoreRow {
  std::string patient_id;
  std::string slide_id;
  int x = 0;
  int y = 0;
  double score = 0.0;
  int label = 0;
  int isup = 0;
};

struct SlideScoreRow {
  std::string patient_id;
  std::string slide_id;
  double score = 0.0;
  int label = 0;
  int isup = 0;
};

struct PatientScoreRow {
  std::string patient_id;
  double score = 0.0;
  int label = 0;
  int isup = 0;
};

// Arithmetic mean across ensemble members: scores[m][t] is model m's score
// for tile t; every member must score the same tiles.
std::vector<double> ensemble_mean(const std::vector<std::vector<double>>& scores);

// Linear-interpolation percentile at rank position (n-1)*q/100.
double slide_score(const std::vector<double>& tile_scores, double q = 75.0);

// Median; even counts average the two middle values.
double patient_score(const std::vector<double>& slide_scores);

// Group tile rows by slide. `expected_slides` lists every slide that should
// have a score; a listed slide with no tiles raises EmptySlide.
std::vector<SlideScoreRow> aggregate_slides(
    const std::vector<TileScoreRow>& tiles,
    const std::vector<SlideScoreRow>& expected_slides, double q = 75.0);

std::vector<PatientScoreRow> aggregate_patients(
    const std::vector<SlideScoreRow>& slides);

}  // namespace wsipipe
