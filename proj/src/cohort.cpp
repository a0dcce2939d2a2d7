#include "wsipipe/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wsipipe/csv.hpp"
#include "wsipipe/rng.hpp"

namespace wsipipe {

CovariateVector encode_covariates(double age_years, double psa_ng_ml) {
  if (age_years <= 0.0 || age_years >= 120.0)
    throw InvalidInput("encode_covariates: age outside (0, 120)");
  if (psa_ng_ml <= 0.0)
    throw InvalidInput("encode_covariates: PSA must be positive");
  CovariateVector cv;
  const double age_edges[] = {55, 60, 65, 70, 120};
  cv.age_bin = 4;
  for (int i = 0; i < 5; ++i)
    if (age_years < age_edges[i]) {
      cv.age_bin = i;
      break;
    }
  const double psa_edges[] = {3, 5, 10};
  cv.psa_bin = 3;
  for (int i = 0; i < 3; ++i)
    if (psa_ng_ml < psa_edges[i]) {
      cv.psa_bin = i;
      break;
    }
  cv.v[cv.age_bin] = 1.0;
  cv.v[5 + cv.psa_bin] = 1.0;
  return cv;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  throw InvalidInput("split_name: bad split");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw InvalidInput("split_from_name: unknown split '" + name + "'");
}

namespace {

struct StratumKey {
  int diagnosis, isup, age_bin, psa_bin, length_tertile;
  auto operator<=>(const StratumKey&) const = default;
};

// Tertile of max cancer length within the cancer subgroup; -1 for benign.
std::map<std::string, int> length_tertiles(
    const std::vector<PatientRecord>& patients) {
  std::vector<double> lengths;
  for (const auto& p : patients)
    if (p.diagnosis) lengths.push_back(p.max_cancer_length);
  std::map<std::string, int> out;
  double t1 = 0, t2 = 0;
  if (!lengths.empty()) {
    t1 = percentile_linear(lengths, 100.0 / 3.0);
    t2 = percentile_linear(lengths, 200.0 / 3.0);
  }
  for (const auto& p : patients) {
    int tert = -1;
    if (p.diagnosis)
      tert = p.max_cancer_length <= t1 ? 0 : (p.max_cancer_length <= t2 ? 1 : 2);
    out[p.patient_id] = tert;
  }
  return out;
}

std::map<StratumKey, std::vector<const PatientRecord*>> build_strata(
    const std::vector<PatientRecord>& patients) {
  const auto tertiles = length_tertiles(patients);
  std::map<StratumKey, std::vector<const PatientRecord*>> strata;
  for (const auto& p : patients) {
    const CovariateVector cv = encode_covariates(p.age_years, p.psa_ng_ml);
    strata[{p.diagnosis, p.isup, cv.age_bin, cv.psa_bin,
            tertiles.at(p.patient_id)}]
        .push_back(&p);
  }
  // Deterministic within-stratum base order before shuffling.
  for (auto& [key, members] : strata)
    std::sort(members.begin(), members.end(),
              [](const PatientRecord* a, const PatientRecord* b) {
                return a->patient_id < b->patient_id;
              });
  return strata;
}

// Largest-remainder allocation of n into parts proportional to fractions,
// with per-part carries that persist across strata.  A stratum smaller than
// 1/min(fraction) would otherwise be sent entirely to the largest part; the
// carry records each part's unpaid quota so that later strata repay it, which
// keeps every part within one seat of its global target.  Remainder ties go
// to the earlier part, and a part whose carried quota is negative never
// receives a seat before the others.
std::vector<int> largest_remainder(int n, const std::vector<double>& fractions,
                                   std::vector<double>& carry) {
  const std::size_t k = fractions.size();
  std::vector<int> counts(k);
  std::vector<double> remainders(k);
  int assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double quota = n * fractions[i] + carry[i];
    counts[i] = std::max(0, static_cast<int>(std::floor(quota)));
    remainders[i] = quota - counts[i];
    assigned += counts[i];
  }
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainders[a] > remainders[b];
  });
  for (int r = 0; r < n - assigned; ++r) ++counts[order[r]];
  for (std::size_t i = 0; i < k; ++i)
    carry[i] = n * fractions[i] + carry[i] - counts[i];
  return counts;
}

}  // namespace

SplitAssignment stratified_split(const std::vector<PatientRecord>& patients,
                                 const SplitFractions& fractions,
                                 std::uint64_t seed) {
  const double sum = fractions.train + fractions.validation + fractions.test;
  if (std::fabs(sum - 1.0) > 1e-9)
    throw InvalidInput("stratified_split: fractions must sum to 1");
  SplitAssignment out;
  out.seed = seed;
  Rng rng(derive_seed(seed, "split"));
  const std::vector<double> parts = {fractions.train, fractions.validation,
                                     fractions.test};
  std::vector<double> carry(parts.size(), 0.0);
  for (auto& [key, members] : build_strata(patients)) {
    rng.shuffle(members);
    const auto counts =
        largest_remainder(static_cast<int>(members.size()), parts, carry);
    std::size_t idx = 0;
    const Split splits[] = {Split::kTrain, Split::kValidation, Split::kTest};
    for (int part = 0; part < 3; ++part)
      for (int i = 0; i < counts[part]; ++i)
        out.split[members[idx++]->patient_id] = splits[part];
  }
  return out;
}

std::vector<SplitAssignment> kfold(const std::vector<PatientRecord>& patients,
                                   int k, std::uint64_t seed) {
  if (k < 2) throw InvalidInput("kfold: k must be at least 2");
  if (static_cast<std::size_t>(k) > patients.size())
    throw InvalidInput("kfold: more folds than patients");
  SplitAssignment membership;
  membership.seed = seed;
  Rng rng(derive_seed(seed, "kfold"));
  int offset = 0;  // carries across strata so fold sizes stay balanced
  for (auto& [key, members] : build_strata(patients)) {
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); ++i)
      membership.fold[members[i]->patient_id] =
          (offset + static_cast<int>(i)) % k;
    offset = (offset + static_cast<int>(members.size())) % k;
  }
  std::vector<SplitAssignment> rounds(k, membership);
  return rounds;
}

SplitAssignment round_split(const std::vector<PatientRecord>& patients,
                            const SplitAssignment& folds, int test_fold,
                            std::uint64_t seed) {
  std::vector<PatientRecord> pool;
  for (const auto& p : patients) {
    const auto it = folds.fold.find(p.patient_id);
    if (it == folds.fold.end())
      throw InvalidInput("round_split: patient missing from fold assignment");
    if (it->second != test_fold) pool.push_back(p);
  }
  return stratified_split(pool, {0.70, 0.15, 0.15},
                          derive_seed(seed, "round", test_fold));
}

namespace {

std::vector<std::vector<double>> two_group_table(
    const std::vector<int>& g0_counts, const std::vector<int>& g1_counts) {
  std::vector<std::vector<double>> table(2);
  for (std::size_t j = 0; j < g0_counts.size(); ++j) {
    if (g0_counts[j] == 0 && g1_counts[j] == 0) continue;  // drop empty column
    table[0].push_back(g0_counts[j]);
    table[1].push_back(g1_counts[j]);
  }
  return table;
}

}  // namespace

BalanceReport balance_report(const SplitAssignment& split,
                             const std::vector<PatientRecord>& patients) {
  std::vector<const PatientRecord*> g0, g1;  // train+validation vs test
  for (const auto& p : patients) {
    const auto it = split.split.find(p.patient_id);
    if (it == split.split.end()) continue;
    (it->second == Split::kTest ? g1 : g0).push_back(&p);
  }
  if (g0.empty() || g1.empty())
    throw InvalidInput("balance_report: a comparison group is empty");

  BalanceReport report;
  auto add_chisq = [&report](const std::string& name,
                             const std::vector<std::vector<double>>& table) {
    if (table[0].size() < 2) return;
    const ChiSquareResult r = chi_square_test(table);
    report.variables.push_back({name, "chisq", r.statistic, r.p_value});
  };
  auto add_mwu = [&report](const std::string& name, const std::vector<double>& a,
                           const std::vector<double>& b) {
    if (a.empty() || b.empty()) return;
    const MannWhitneyResult r = mann_whitney_u(a, b);
    report.variables.push_back({name, "mannwhitney", r.u, r.p_value});
  };

  // Diagnosis.
  std::vector<int> d0(2, 0), d1(2, 0);
  for (const auto* p : g0) ++d0[p->diagnosis];
  for (const auto* p : g1) ++d1[p->diagnosis];
  add_chisq("diagnosis", two_group_table(d0, d1));

  // ISUP among cancer patients.
  std::vector<int> i0(6, 0), i1(6, 0);
  for (const auto* p : g0)
    if (p->diagnosis) ++i0[p->isup];
  for (const auto* p : g1)
    if (p->diagnosis) ++i1[p->isup];
  add_chisq("isup", two_group_table(i0, i1));

  // PSA bins.
  std::vector<int> p0(4, 0), p1(4, 0);
  for (const auto* p : g0) ++p0[encode_covariates(p->age_years, p->psa_ng_ml).psa_bin];
  for (const auto* p : g1) ++p1[encode_covariates(p->age_years, p->psa_ng_ml).psa_bin];
  add_chisq("psa_bin", two_group_table(p0, p1));

  // Continuous variables.
  std::vector<double> age0, age1, mean0, mean1, max0, max1;
  for (const auto* p : g0) {
    age0.push_back(p->age_years);
    if (p->diagnosis) {
      mean0.push_back(p->mean_cancer_length);
      max0.push_back(p->max_cancer_length);
    }
  }
  for (const auto* p : g1) {
    age1.push_back(p->age_years);
    if (p->diagnosis) {
      mean1.push_back(p->mean_cancer_length);
      max1.push_back(p->max_cancer_length);
    }
  }
  add_mwu("age_years", age0, age1);
  add_mwu("mean_cancer_length", mean0, mean1);
  add_mwu("max_cancer_length", max0, max1);
  return report;
}

std::string balance_report_markdown(const BalanceReport& report) {
  std::ostringstream out;
  out << "| Variable | Test | Statistic | p-value |\n";
  out << "|---|---|---|---|\n";
  for (const auto& v : report.variables) {
    out << "| " << v.name << " | "
        << (v.test == "chisq" ? "Chisq test" : "Mann-Whitney U test") << " | "
        << fmt_double(v.statistic, 4) << " | " << fmt_double(v.p_value, 4)
        << " |\n";
  }
  return out.str();
}

void write_splits_csv(const std::filesystem::path& path,
                      const SplitAssignment& assignment) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [pid, split] : assignment.split) {
    const auto fold_it = assignment.fold.find(pid);
    rows.push_back({pid, split_name(split),
                    fold_it == assignment.fold.end()
                        ? "-1"
                        : std::to_string(fold_it->second)});
  }
  for (const auto& [pid, fold] : assignment.fold)
    if (!assignment.split.count(pid))
      rows.push_back({pid, "", std::to_string(fold)});
  write_csv(path, {"patient_id", "split", "fold"}, rows);
}

SplitAssignment read_splits_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  SplitAssignment out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::string pid = table.cell(i, "patient_id");
    const std::string split = table.cell(i, "split");
    if (!split.empty()) out.split[pid] = split_from_name(split);
    const int fold = std::stoi(table.cell(i, "fold"));
    if (fold >= 0) out.fold[pid] = fold;
  }
  return out;
}

std::vector<PatientRecord> load_patients(const std::filesystem::path& cohort_csv) {
  const CsvTable table = read_csv(cohort_csv);
  std::vector<PatientRecord> patients;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::string pid = table.cell(i, "patient_id");
    auto it = index.find(pid);
    if (it == index.end()) {
      PatientRecord p;
      p.patient_id = pid;
      p.age_years = std::stod(table.cell(i, "age_years"));
      p.psa_ng_ml = std::stod(table.cell(i, "psa_ng_ml"));
      p.diagnosis = std::stoi(table.cell(i, "diagnosis"));
      p.isup = std::stoi(table.cell(i, "isup"));
      p.mean_cancer_length = std::stod(table.cell(i, "mean_cancer_length_mm"));
      p.max_cancer_length = std::stod(table.cell(i, "max_cancer_length_mm"));
      it = index.emplace(pid, patients.size()).first;
      patients.push_back(std::move(p));
    }
    patients[it->second].slide_ids.push_back(table.cell(i, "slide_id"));
  }
  return patients;
}

}  // namespace wsipipe
