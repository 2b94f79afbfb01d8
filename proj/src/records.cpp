#include "asthmarisk/records.hpp"

#include <algorithm>
#include <array>

namespace asthmarisk {

namespace {

const std::array<std::string, 3> kGenderNames = {"F", "M", "Unknown"};
const std::array<std::string, 3> kSettingNames = {"ED", "Inpatient", "Outpatient"};
const std::array<std::string, 6> kComorbidityNames = {
    "Obesity",         "SleepApnea", "AllergicRhinitis",
    "AtopicDermatitis", "GERD",       "AnxietyDepression"};
const std::array<std::string, 4> kMedClassNames = {"Controller", "Reliever",
                                                   "OralCorticosteroid", "OtherAsthma"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string, N>& names, const std::string& s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

}  // namespace

const std::string& to_string(Gender g) { return kGenderNames[static_cast<int>(g)]; }
const std::string& to_string(Setting s) { return kSettingNames[static_cast<int>(s)]; }
const std::string& to_string(Comorbidity c) { return kComorbidityNames[static_cast<int>(c)]; }
const std::string& to_string(MedClass m) { return kMedClassNames[static_cast<int>(m)]; }

std::optional<Gender> gender_from_string(const std::string& s) {
  return lookup<Gender>(kGenderNames, s);
}
std::optional<Setting> setting_from_string(const std::string& s) {
  return lookup<Setting>(kSettingNames, s);
}
std::optional<Comorbidity> comorbidity_from_string(const std::string& s) {
  return lookup<Comorbidity>(kComorbidityNames, s);
}
std::optional<MedClass> med_class_from_string(const std::string& s) {
  return lookup<MedClass>(kMedClassNames, s);
}

std::vector<EnrollmentSpan> normalize_spans(std::vector<EnrollmentSpan> spans) {
  if (spans.empty()) return spans;
  std::sort(spans.begin(), spans.end(), [](const EnrollmentSpan& a, const EnrollmentSpan& b) {
    if (a.start_date != b.start_date) return a.start_date < b.start_date;
    return a.end_date < b.end_date;
  });
  std::vector<EnrollmentSpan> merged;
  merged.push_back(spans.front());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    EnrollmentSpan& last = merged.back();
    if (spans[i].start_date - last.end_date <= 1) {
      last.end_date = std::max(last.end_date, spans[i].end_date);
    } else {
      merged.push_back(spans[i]);
    }
  }
  return merged;
}

}  // namespace asthmarisk
