#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asthmarisk/cohort.hpp"
#include "asthmarisk/records.hpp"

namespace asthmarisk {

enum class FeatureCategory { Demographics, Medication, Utilization, Comorbidity, InsuranceGap };
const std::string& to_string(FeatureCategory c);
std::optional<FeatureCategory> feature_category_from_string(const std::string& s);

enum class ExtractorKind {
  GenderFlag,
  AgeYears,
  AmrRatio,
  FillCount,
  DistinctMedClasses,
  ClaimCount,
  ComorbidityFlag,
  InsuranceGapCount,
};
const std::string& to_string(ExtractorKind k);
std::optional<ExtractorKind> extractor_kind_from_string(const std::string& s);

struct FeatureSpec {
  std::string name;
  FeatureCategory category = FeatureCategory::Utilization;
  ExtractorKind extractor = ExtractorKind::ClaimCount;
  std::optional<int> window_days;
  std::optional<MedClass> med_class;        // FillCount filter
  std::optional<Setting> setting;           // ClaimCount filter
  bool asthma_primary_only = false;         // ClaimCount filter
  std::optional<Comorbidity> comorbidity;   // ComorbidityFlag target
  bool binary = false;                      // passed through the scaler untouched

  bool operator==(const FeatureSpec&) const = default;
};

// The production registry: 33 features across the five categories. The
// window floor keeps every count window clear of the claims lag.
std::vector<FeatureSpec> default_registry();

// Rejects specs whose window is under min_window_days (3 x lag by default);
// such counts are likely miscoded at prediction time.
std::vector<std::string> validate_registry(const std::vector<FeatureSpec>& specs, int lag_days);
inline int min_window_days(int lag_days) { return 3 * lag_days; }

struct RowKey {
  std::string patient_id;
  Date prediction_date;
  bool operator==(const RowKey&) const = default;
};

struct Scaler {
  struct Col {
    double mean = 0.0;
    double sd = 1.0;
  };
  std::vector<Col> cols;
};

struct FeatureMatrix {
  std::vector<RowKey> row_keys;
  std::vector<FeatureSpec> columns;
  std::vector<double> values;  // row-major, row_keys.size() x columns.size()
  std::vector<int> labels;     // 0/1
  std::optional<Scaler> scaler;  // set once standardized

  std::size_t rows() const { return row_keys.size(); }
  std::size_t cols() const { return columns.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  const double* row(std::size_t r) const { return values.data() + r * cols(); }

  std::size_t positives() const;
  std::vector<std::string> feature_names() const;
};

enum class LabelScope { EdOnly, EdOrInpatient };
const std::string& to_string(LabelScope s);
std::optional<LabelScope> label_scope_from_string(const std::string& s);

// One row per id in `eligible_ids`, in that order. Count features cover
// (prediction_date - window, prediction_date]; the label is an asthma-primary
// ED (optionally inpatient) claim in (prediction_date, prediction_date + 91d].
// Undefined AMR becomes NaN here and is imputed by the scaler from train
// statistics.
FeatureMatrix extract_features(const std::map<std::string, PatientTimeline>& timelines,
                               const std::vector<std::string>& eligible_ids,
                               const PredictionContext& ctx,
                               const std::vector<FeatureSpec>& registry,
                               LabelScope scope = LabelScope::EdOrInpatient);

enum class Resampling { None, Oversample, Downsample };
const std::string& to_string(Resampling r);
std::optional<Resampling> resampling_from_string(const std::string& s);

struct SplitPlan {
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  Resampling resampling = Resampling::None;
};

struct Split {
  FeatureMatrix train;
  FeatureMatrix test;
};

// Seeded shuffle split. Resampling touches train only: Oversample keeps every
// original row and duplicates minority rows (with replacement) to class
// parity; Downsample subsamples the majority to parity. Throws when the
// matrix is empty or single-class.
Split split_and_resample(const FeatureMatrix& matrix, const SplitPlan& plan);

// Train-only statistics. Continuous columns standardize to mean 0 / sd 1
// (sd 0 columns just center); binary flags pass through; NaN cells impute to
// the train mean of that column before standardizing.
Scaler fit_scaler(const FeatureMatrix& train);
FeatureMatrix apply_scaler(FeatureMatrix matrix, const Scaler& scaler);

// CSV: patient_id,prediction_date,<feature names...>,label. The JSON sidecar
// (same path + ".json") carries registry, scaler, context and seed so a run
// can be reproduced from the files alone.
std::string matrix_to_csv(const FeatureMatrix& m);
std::string matrix_sidecar_json(const FeatureMatrix& m, const PredictionContext& ctx,
                                std::uint64_t seed);
void write_matrix_csv(const std::string& path, const FeatureMatrix& m,
                      const PredictionContext& ctx, std::uint64_t seed);
FeatureMatrix read_matrix_csv(const std::string& path);

}  // namespace asthmarisk
