#include "asthmarisk/cohort.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

#include "asthmarisk/csv.hpp"

namespace asthmarisk {

DateRange rule_window(Date as_of, int days) { return {as_of.plus_days(-days), as_of}; }

DateRange feature_window(Date prediction_date, int days) {
  return {prediction_date.plus_days(-days + 1), prediction_date.plus_days(1)};
}

DateRange label_window(Date prediction_date, int days) {
  return {prediction_date.plus_days(1), prediction_date.plus_days(days + 1)};
}

int count_claims(const PatientTimeline& tl, DateRange window,
                 std::optional<Setting> setting, bool asthma_primary_only) {
  int n = 0;
  for (const auto& c : tl.claims) {
    if (!window.contains(c.service_date)) continue;
    if (setting && c.setting != *setting) continue;
    if (asthma_primary_only && !c.primary_dx_asthma) continue;
    ++n;
  }
  return n;
}

int count_fills(const PatientTimeline& tl, DateRange window, std::optional<MedClass> med_class) {
  int n = 0;
  for (const auto& f : tl.fills) {
    if (!window.contains(f.fill_date)) continue;
    if (med_class && f.med_class != *med_class) continue;
    ++n;
  }
  return n;
}

std::optional<double> amr(const PatientTimeline& tl, DateRange window) {
  int controller = count_fills(tl, window, MedClass::Controller);
  int reliever = count_fills(tl, window, MedClass::Reliever);
  if (controller + reliever == 0) return std::nullopt;
  return static_cast<double>(controller) / (controller + reliever);
}

bool cste_probable_asthma(const PatientTimeline& tl, Date as_of, int lookback_days) {
  DateRange w = rule_window(as_of, lookback_days);
  if (count_claims(tl, w, std::nullopt, /*asthma_primary_only=*/true) >= 1) return true;
  return count_fills(tl, w, std::nullopt) >= 1;
}

bool hedis_persistent_asthma(const PatientTimeline& tl, Date as_of, const HedisThresholds& cfg,
                             int lookback_days) {
  DateRange w = rule_window(as_of, lookback_days);
  if (count_claims(tl, w, Setting::ED, true) >= cfg.ed_min) return true;
  if (count_claims(tl, w, Setting::Inpatient, true) >= cfg.inpatient_min) return true;
  int fills = count_fills(tl, w, std::nullopt);
  if (count_claims(tl, w, Setting::Outpatient, true) >= cfg.outpatient_min &&
      fills >= cfg.outpatient_fills_min) {
    return true;
  }
  return fills >= cfg.fills_min;
}

const std::string& to_string(CohortStage s) {
  static const std::array<std::string, 3> names = {"AgeRange", "CSTE", "ContinuousEnrollment"};
  return names[static_cast<int>(s)];
}

namespace {

// Largest uncovered run (in days) inside [window_start, window_end],
// counting leading and trailing uncovered stretches. Spans come in
// normalized, so a linear sweep suffices.
int max_coverage_gap(const std::vector<EnrollmentSpan>& spans, Date window_start,
                     Date window_end) {
  Date cursor = window_start;  // first day not yet known covered
  int worst = 0;
  for (const auto& s : spans) {
    if (s.end_date < window_start) continue;
    if (s.start_date > window_end) break;
    if (s.start_date > cursor) worst = std::max(worst, s.start_date - cursor);
    Date after = s.end_date.plus_days(1);
    if (after > cursor) cursor = after;
    if (cursor > window_end) return worst;
  }
  if (cursor <= window_end) worst = std::max(worst, window_end - cursor + 1);
  return worst;
}

}  // namespace

CohortResult select_cohort(const std::map<std::string, PatientTimeline>& timelines,
                           const PredictionContext& ctx, const AgeBounds& age,
                           const EnrollmentRule& enrollment) {
  CohortResult result;
  result.funnel.input = timelines.size();
  result.decisions.reserve(timelines.size());

  Date pred = ctx.prediction_date;
  Date cover_start = pred.plus_days(-ctx.lookback_days);
  Date cover_end = pred.plus_days(ctx.label_days);

  for (const auto& [pid, tl] : timelines) {
    CohortDecision d;
    d.patient_id = pid;

    // Infants cannot be enrolled before they exist; the required coverage
    // window starts at birth when that is later than the lookback start.
    Date patient_cover_start = std::max(cover_start, tl.demographics.birth_date);

    double years = age_years(tl.demographics.birth_date, pred);
    if (years < age.min_years || years > age.max_years) {
      d.failed_stages.push_back(CohortStage::AgeRange);
      result.funnel.failed_age++;
    } else if (!cste_probable_asthma(tl, pred, ctx.lookback_days)) {
      d.failed_stages.push_back(CohortStage::CSTE);
      result.funnel.failed_cste++;
    } else if (max_coverage_gap(tl.enrollment, patient_cover_start, cover_end) >
               enrollment.max_gap_days) {
      d.failed_stages.push_back(CohortStage::ContinuousEnrollment);
      result.funnel.failed_enrollment++;
    } else {
      d.eligible = true;
      result.funnel.eligible++;
    }
    result.decisions.push_back(std::move(d));
  }
  return result;
}

std::string FunnelSummary::to_json() const {
  // Hand-rolled so stage order is stable in the output.
  std::string s = "{\n";
  s += "  \"input\": " + std::to_string(input) + ",\n";
  std::size_t after_age = input - failed_age;
  std::size_t after_cste = after_age - failed_cste;
  s += "  \"stages\": [\n";
  s += "    {\"stage\": \"AgeRange\", \"failed\": " + std::to_string(failed_age) +
       ", \"surviving\": " + std::to_string(after_age) + "},\n";
  s += "    {\"stage\": \"CSTE\", \"failed\": " + std::to_string(failed_cste) +
       ", \"surviving\": " + std::to_string(after_cste) + "},\n";
  s += "    {\"stage\": \"ContinuousEnrollment\", \"failed\": " +
       std::to_string(failed_enrollment) + ", \"surviving\": " + std::to_string(eligible) +
       "}\n";
  s += "  ],\n";
  s += "  \"eligible\": " + std::to_string(eligible) + "\n";
  s += "}\n";
  return s;
}

std::string decisions_to_csv(const std::vector<CohortDecision>& decisions) {
  std::string out = "patient_id,eligible,failed_stages\n";
  for (const auto& d : decisions) {
    std::string stages;
    for (auto s : d.failed_stages) {
      if (!stages.empty()) stages += ';';
      stages += to_string(s);
    }
    out += csv::join_line({d.patient_id, d.eligible ? "1" : "0", stages}) + "\n";
  }
  return out;
}

void write_decisions_csv(const std::string& path, const std::vector<CohortDecision>& decisions) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write cohort decisions: " + path);
  out << decisions_to_csv(decisions);
}

}  // namespace asthmarisk
