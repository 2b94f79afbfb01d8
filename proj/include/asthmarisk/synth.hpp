#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asthmarisk/extract.hpp"
#include "asthmarisk/records.hpp"

namespace asthmarisk {

// Seeded synthetic claims extract with a planted latent-severity signal.
// Severity drives utilization and the outcome; adherence drives the
// controller/reliever mix (so low AMR tracks risk) and insurance gaps.
struct SynthConfig {
  std::size_t n_patients = 28378;
  Date study_start = Date::from_ymd(2012, 7, 1);
  Date study_end = Date::from_ymd(2014, 6, 30);
  Date prediction_date = Date::from_ymd(2013, 7, 1);
  double target_prevalence = 0.03;
  std::uint64_t seed = 0;
  double signal_strength = 1.0;  // 0 flattens every rate and the outcome
  double age_min_years = 0.5;
  double age_max_years = 18.0;
  // Fraction of patients built to fail exactly one funnel stage
  // (age / CSTE / enrollment, round-robin).
  double decoy_fraction = 0.20;
};

// Throws with an explanation when the window cannot hold a 12-month lookback
// plus a 3-month label period around the prediction date.
void validate(const SynthConfig& cfg);

struct LatentProfile {
  std::string patient_id;
  double severity = 0.0;   // in [0,1]
  double adherence = 0.0;  // in [0,1]
};

struct GroundTruthEntry {
  std::string patient_id;
  double severity = 0.0;
  double true_prob = 0.0;
  int label = 0;
};

struct SynthOutput {
  std::string patients_csv;
  std::string claims_csv;
  std::string fills_csv;
  std::string enrollment_csv;
  std::string ground_truth_csv;
  std::vector<GroundTruthEntry> ground_truth;
  double realized_prevalence = 0.0;  // over all generated patients
};

// Deterministic: identical config (seed included) gives identical bytes.
// Per-patient draws come from independent child streams, so generation is
// pure per patient index.
SynthOutput generate(const SynthConfig& cfg);

// Writes the four extract files plus ground_truth.csv into dir and returns
// the extract paths.
ExtractPaths write_synth_files(const SynthOutput& out, const std::string& dir);

std::string serialize_ground_truth(const std::vector<GroundTruthEntry>& entries);
std::vector<GroundTruthEntry> read_ground_truth_csv(const std::string& path);

// Mann-Whitney AUC of the true event probability against realized labels:
// the ceiling any model can reach in expectation. Throws on single-class
// labels.
double bayes_auc(const std::vector<GroundTruthEntry>& entries);

}  // namespace asthmarisk
