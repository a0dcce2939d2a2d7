#include "wsipipe/aggregate.hpp"

#include <map>

#include "wsipipe/stats.hpp"

namespace wsipipe {

std::vector<double> ensemble_mean(const std::vector<std::vector<double>>& scores) {
  if (scores.empty()) throw InvalidInput("ensemble_mean: no models");
  const std::size_t n_tiles = scores[0].size();
  for (const auto& member : scores)
    if (member.size() != n_tiles)
      throw InvalidInput("ensemble_mean: per-model tile counts differ");
  std::vector<double> mean(n_tiles, 0.0);
  for (const auto& member : scores)
    for (std::size_t t = 0; t < n_tiles; ++t) mean[t] += member[t];
  for (double& v : mean) v /= static_cast<double>(scores.size());
  return mean;
}

double slide_score(const std::vector<double>& tile_scores, double q) {
  if (tile_scores.empty()) throw EmptySlide("slide has no QC-passing tiles");
  return percentile_linear(tile_scores, q);
}

double patient_score(const std::vector<double>& slide_scores) {
  if (slide_scores.empty()) throw EmptyPatient("patient has no scored slides");
  return median(slide_scores);
}

std::vector<SlideScoreRow> aggregate_slides(
    const std::vector<TileScoreRow>& tiles,
    const std::vector<SlideScoreRow>& expected_slides, double q) {
  std::map<std::string, std::vector<double>> by_slide;
  for (const auto& t : tiles) by_slide[t.slide_id].push_back(t.score);
  std::vector<SlideScoreRow> out;
  out.reserve(expected_slides.size());
  for (SlideScoreRow row : expected_slides) {
    auto it = by_slide.find(row.slide_id);
    if (it == by_slide.end())
      throw EmptySlide("slide " + row.slide_id + " has no QC-passing tiles");
    row.score = slide_score(it->second, q);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<PatientScoreRow> aggregate_patients(
    const std::vector<SlideScoreRow>& slides) {
  std::map<std::string, PatientScoreRow> meta;
  std::map<std::string, std::vector<double>> by_patient;
  for (const auto& s : slides) {
    by_patient[s.patient_id].push_back(s.score);
    auto& m = meta[s.patient_id];
    m.patient_id = s.patient_id;
    m.label = s.label;
    m.isup = s.isup;
  }
  std::vector<PatientScoreRow> out;
  out.reserve(meta.size());
  for (auto& [pid, row] : meta) {
    row.score = patient_score(by_patient[pid]);
    out.push_back(row);
  }
  return out;
}

}  // namespace wsipipe
