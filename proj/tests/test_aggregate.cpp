#include <algorithm>

#include "doctest.h"
#include "wsipipe/aggregate.hpp"
#include "wsipipe/rng.hpp"

using namespace wsipipe;

TEST_CASE("ensemble mean averages member scores per tile") {
  const auto mean = ensemble_mean({{0.2, 0.4}, {0.4, 0.8}});
  REQUIRE(mean.size() == 2);
  CHECK(mean[0] == doctest::Approx(0.3));
  CHECK(mean[1] == doctest::Approx(0.6));
  CHECK_THROWS_AS(ensemble_mean({{0.2, 0.4}, {0.4}}), InvalidInput);
  CHECK_THROWS_AS(ensemble_mean({}), InvalidInput);
}

TEST_CASE("slide score: 75th percentile with linear interpolation") {
  CHECK(slide_score({1, 2, 3, 4}) == doctest::Approx(3.25).epsilon(1e-15));
  CHECK(slide_score({0.7}) == 0.7);
  CHECK(slide_score({1, 2, 3, 4}, 0.0) == 1.0);
  CHECK(slide_score({1, 2, 3, 4}, 100.0) == 4.0);
  CHECK_THROWS_AS(slide_score({}), EmptySlide);
}

TEST_CASE("patient score: median of slide scores") {
  CHECK(patient_score({0.2, 0.8}) == doctest::Approx(0.5));
  CHECK(patient_score({0.1, 0.9, 0.4}) == doctest::Approx(0.4));
  CHECK_THROWS_AS(patient_score({}), EmptyPatient);
}

TEST_CASE("slide aggregation groups tiles and flags silent slides") {
  std::vector<TileScoreRow> tiles;
  for (int i = 0; i < 4; ++i)
    tiles.push_back({"P0", "P0_S0", i, 0, 0.1 * (i + 1), 1, 2});
  tiles.push_back({"P0", "P0_S1", 0, 0, 0.9, 1, 2});
  std::vector<SlideScoreRow> expected = {{"P0", "P0_S0", 0, 1, 2},
                                         {"P0", "P0_S1", 0, 1, 2}};
  const auto slides = aggregate_slides(tiles, expected, 75.0);
  REQUIRE(slides.size() == 2);
  CHECK(slides[0].score == doctest::Approx(0.325));
  CHECK(slides[1].score == doctest::Approx(0.9));
  expected.push_back({"P0", "P0_S2", 0, 1, 2});
  CHECK_THROWS_AS(aggregate_slides(tiles, expected, 75.0), EmptySlide);
}

TEST_CASE("patient aggregation takes the median across slides") {
  std::vector<SlideScoreRow> slides = {{"P0", "P0_S0", 0.2, 1, 3},
                                       {"P0", "P0_S1", 0.8, 1, 3},
                                       {"P1", "P1_S0", 0.4, 0, 0}};
  const auto patients = aggregate_patients(slides);
  REQUIRE(patients.size() == 2);
  CHECK(patients[0].patient_id == "P0");
  CHECK(patients[0].score == doctest::Approx(0.5));
  CHECK(patients[0].isup == 3);
  CHECK(patients[1].score == doctest::Approx(0.4));
}

TEST_CASE("aggregation is monotone and permutation invariant") {
  Rng rng(55);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(12));
    std::vector<double> scores(n);
    for (double& s : scores) s = rng.uniform();
    const double q = rng.uniform(0.0, 100.0);
    const double base = slide_score(scores, q);
    // Raising any one tile score never lowers the slide score.
    std::vector<double> raised = scores;
    const std::size_t which = rng.below(n);
    raised[which] += rng.uniform(0.0, 0.5);
    CHECK(slide_score(raised, q) >= base - 1e-12);
    // Order of tiles is irrelevant.
    std::vector<double> shuffled = scores;
    rng.shuffle(shuffled);
    CHECK(slide_score(shuffled, q) == doctest::Approx(base).epsilon(1e-12));
    // Median bounded by its inputs.
    const double med = patient_score(scores);
    CHECK(med >= *std::min_element(scores.begin(), scores.end()) - 1e-12);
    CHECK(med <= *std::max_element(scores.begin(), scores.end()) + 1e-12);
  }
}
