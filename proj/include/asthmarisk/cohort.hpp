#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asthmarisk/records.hpp"

namespace asthmarisk {

// Windows around a prediction date. Claims take ~30-90 days to land in the
// extract, which is why sub-90-day feature windows are banned downstream.
struct PredictionContext {
  Date prediction_date;
  int lookback_days = 365;  // feature/rule history
  int label_days = 91;      // outcome window after prediction_date
  int lag_days = 30;        // claims processing lag
};

// Rule-engine history window [as_of - days, as_of): events on as_of itself
// are not yet knowable.
DateRange rule_window(Date as_of, int days);
// Feature count window (pred - days, pred].
DateRange feature_window(Date prediction_date, int days);
// Outcome window (pred, pred + days].
DateRange label_window(Date prediction_date, int days);

int count_claims(const PatientTimeline& tl, DateRange window,
                 std::optional<Setting> setting, bool asthma_primary_only);
int count_fills(const PatientTimeline& tl, DateRange window, std::optional<MedClass> med_class);

// controller / (controller + reliever) fills in the window; absent when the
// denominator is zero.
std::optional<double> amr(const PatientTimeline& tl, DateRange window);

// AMR below 0.5 flags poor controller coverage.
inline bool amr_high_risk(double amr_value) { return amr_value < 0.5; }

// ">= 1 asthma-primary visit in any setting, or >= 1 asthma medication fill,
// in the preceding 12 months".
bool cste_probable_asthma(const PatientTimeline& tl, Date as_of, int lookback_days = 365);

// Branch thresholds are config-driven; the defaults keep HEDIS a strictly
// stronger condition than CSTE.
struct HedisThresholds {
  int ed_min = 1;
  int inpatient_min = 1;
  int outpatient_min = 4;
  int outpatient_fills_min = 2;  // paired with the outpatient branch
  int fills_min = 4;
};

bool hedis_persistent_asthma(const PatientTimeline& tl, Date as_of,
                             const HedisThresholds& cfg = {}, int lookback_days = 365);

enum class CohortStage { AgeRange, CSTE, ContinuousEnrollment };
const std::string& to_string(CohortStage s);

struct CohortDecision {
  std::string patient_id;
  bool eligible = false;
  // First-failure attribution: a patient failing age is not tested further,
  // so this holds at most one stage.
  std::vector<CohortStage> failed_stages;
};

struct AgeBounds {
  double min_years = 0.5;
  double max_years = 18.0;  // inclusive on both ends
};

struct EnrollmentRule {
  int max_gap_days = 45;
};

struct FunnelSummary {
  std::size_t input = 0;
  std::size_t failed_age = 0;
  std::size_t failed_cste = 0;
  std::size_t failed_enrollment = 0;
  std::size_t eligible = 0;

  std::string to_json() const;
};

struct CohortResult {
  std::vector<CohortDecision> decisions;  // input order of the timeline map
  FunnelSummary funnel;
};

// Stages in funnel order: age -> CSTE -> continuous enrollment over
// [pred - lookback, pred + label] with no single coverage gap above
// max_gap_days (uncovered leading/trailing stretches count as gaps).
CohortResult select_cohort(const std::map<std::string, PatientTimeline>& timelines,
                           const PredictionContext& ctx, const AgeBounds& age = {},
                           const EnrollmentRule& enrollment = {});

std::string decisions_to_csv(const std::vector<CohortDecision>& decisions);
void write_decisions_csv(const std::string& path, const std::vector<CohortDecision>& decisions);

}  // namespace asthmarisk
