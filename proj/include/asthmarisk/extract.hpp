#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asthmarisk/codemap.hpp"
#include "asthmarisk/records.hpp"

namespace asthmarisk {

// The four extract files. Headers are fixed:
//   patients.csv    patient_id,birth_date,gender
//   claims.csv      patient_id,service_date,setting,primary_dx_asthma,comorbidity_codes
//   fills.csv       patient_id,fill_date,med_class
//   enrollment.csv  patient_id,start_date,end_date
// comorbidity_codes is a ';'-joined list of raw codes, possibly empty.
struct ExtractPaths {
  std::string patients;
  std::string claims;
  std::string fills;
  std::string enrollment;
};

struct ExtractSchema {
  CodeMap code_map = CodeMap::defaults();
  // When set, claim/fill events outside the window are rejected row-level.
  std::optional<DateRange> study_window;
};

struct Reject {
  std::string file;
  std::size_t row = 0;  // physical 1-based line number
  std::string reason;
};

struct FileCounts {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

struct ParsedExtract {
  std::vector<PatientDemographics> demographics;
  std::vector<ClaimRecord> claims;
  std::vector<RxRecord> fills;
  std::vector<EnrollmentSpan> spans;
  std::vector<Reject> rejects;
  std::map<std::string, FileCounts> counts;  // keyed by file basename
};

// Structural problems (missing file, wrong header, duplicate patient_id in
// demographics) throw; everything else lands in rejects. Dirty rows are the
// norm in claims extracts, so a run never aborts on them.
ParsedExtract parse_extract(const ExtractPaths& paths, const ExtractSchema& schema);

// Canonical serialization: enum names, 0/1 booleans, ISO dates, LF endings.
// parse(serialize(records)) is the identity on accepted records.
std::string serialize_patients(const std::vector<PatientDemographics>& rows);
std::string serialize_claims(const std::vector<ClaimRecord>& rows);
std::string serialize_fills(const std::vector<RxRecord>& rows);
std::string serialize_enrollment(const std::vector<EnrollmentSpan>& rows);

std::string reject_report_csv(const std::vector<Reject>& rejects);
void write_reject_report(const std::string& path, const std::vector<Reject>& rejects);

struct TimelineBuild {
  std::map<std::string, PatientTimeline> timelines;
  std::vector<Reject> rejects;  // orphan events
};

// One timeline per patient in demographics. Events referencing an unknown
// patient_id are collected as rejects, not fatal. Events sort by date with
// input order preserved on ties; spans come out normalized.
TimelineBuild build_timelines(const ParsedExtract& parsed);

}  // namespace asthmarisk
