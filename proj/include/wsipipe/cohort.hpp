#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wsipipe/stats.hpp"

namespace wsipipe {

struct PatientRecord {
  std::string patient_id;
  double age_years = 0.0;
  double psa_ng_ml = 0.0;
  int diagnosis = 0;  // 0 benign, 1 cancer
  int isup = 0;       // 0 for benign
  double mean_cancer_length = 0.0;
  double max_cancer_length = 0.0;
  std::vector<std::string> slide_ids;
};

// 9-dimensional one-hot concatenation: 5 age bins then 4 PSA bins, all
// left-closed right-open.
struct CovariateVector {
  std::array<double, 9> v{};
  int age_bin = -1;
  int psa_bin = -1;
};

CovariateVector encode_covariates(double age_years, double psa_ng_ml);

enum class Split { kTrain, kValidation, kTest };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct SplitAssignment {
  std::map<std::string, Split> split;   // patient_id -> split
  std::map<std::string, int> fold;      // patient_id -> fold (k-fold only)
  std::uint64_t seed = 0;
};

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

SplitAssignment stratified_split(const std::vector<PatientRecord>& patients,
                                 const SplitFractions& fractions,
                                 std::uint64_t seed);

// Stratified, disjoint, exhaustive folds. Within each CV round the training
// portion is further split 70/15/15 into train/tuning/inner-validation;
// kfold returns the fold membership, round_split derives the inner split.
std::vector<SplitAssignment> kfold(const std::vector<PatientRecord>& patients,
                                   int k, std::uint64_t seed);

// Inner split for one CV round: fold `test_fold` is the held fold, the rest
// is split 70/15/15 (train/tuning/inner validation as train/validation/test).
SplitAssignment round_split(const std::vector<PatientRecord>& patients,
                            const SplitAssignment& folds, int test_fold,
                            std::uint64_t seed);

struct BalanceVariable {
  std::string name;
  std::string test;  // "chisq" or "mannwhitney"
  double statistic = 0.0;
  double p_value = 1.0;
};

struct BalanceReport {
  std::vector<BalanceVariable> variables;
};

// Train+validation versus test, in the shape of a sample-description table:
// chi-square for diagnosis / ISUP / PSA bins, Mann-Whitney for age and the
// cancer lengths.
BalanceReport balance_report(const SplitAssignment& split,
                             const std::vector<PatientRecord>& patients);

std::string balance_report_markdown(const BalanceReport& report);

// splits.csv persistence: patient_id, split, fold.
void write_splits_csv(const std::filesystem::path& path,
                      const SplitAssignment& assignment);
SplitAssignment read_splits_csv(const std::filesystem::path& path);

// Patient records from a cohort manifest (one row per slide).
std::vector<PatientRecord> load_patients(const std::filesystem::path& cohort_csv);

}  // namespace wsipipe
