#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "asthmarisk/dates.hpp"

namespace asthmarisk {

enum class Gender { F, M, Unknown };

enum class Setting { ED, Inpatient, Outpatient };

enum class Comorbidity {
  Obesity,
  SleepApnea,
  AllergicRhinitis,
  AtopicDermatitis,
  GERD,
  AnxietyDepression,
};
inline constexpr int kComorbidityCount = 6;

enum class MedClass { Controller, Reliever, OralCorticosteroid, OtherAsthma };
inline constexpr int kMedClassCount = 4;

const std::string& to_string(Gender g);
const std::string& to_string(Setting s);
const std::string& to_string(Comorbidity c);
const std::string& to_string(MedClass m);

std::optional<Gender> gender_from_string(const std::string& s);
std::optional<Setting> setting_from_string(const std::string& s);
std::optional<Comorbidity> comorbidity_from_string(const std::string& s);
std::optional<MedClass> med_class_from_string(const std::string& s);

struct PatientDemographics {
  std::string patient_id;
  Date birth_date;
  Gender gender = Gender::Unknown;

  bool operator==(const PatientDemographics&) const = default;
};

struct ClaimRecord {
  std::string patient_id;
  Date service_date;
  Setting setting = Setting::Outpatient;
  bool primary_dx_asthma = false;
  std::set<Comorbidity> comorbidity_codes;

  bool operator==(const ClaimRecord&) const = default;
};

struct RxRecord {
  std::string patient_id;
  Date fill_date;
  MedClass med_class = MedClass::OtherAsthma;

  bool operator==(const RxRecord&) const = default;
};

// Inclusive [start_date, end_date] coverage span.
struct EnrollmentSpan {
  std::string patient_id;
  Date start_date;
  Date end_date;

  bool operator==(const EnrollmentSpan&) const = default;
};

// Per-patient merged history: events date-sorted (ties keep input order),
// enrollment spans normalized so no two overlap or touch.
struct PatientTimeline {
  PatientDemographics demographics;
  std::vector<ClaimRecord> claims;
  std::vector<RxRecord> fills;
  std::vector<EnrollmentSpan> enrollment;
};

// Merges overlapping or adjacent (end + 1 day == start) spans. Idempotent.
std::vector<EnrollmentSpan> normalize_spans(std::vector<EnrollmentSpan> spans);

}  // namespace asthmarisk
