#include "asthmarisk/extract.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "asthmarisk/csv.hpp"

namespace asthmarisk {

namespace {

const std::vector<std::string> kPatientsHeader = {"patient_id", "birth_date", "gender"};
const std::vector<std::string> kClaimsHeader = {"patient_id", "service_date", "setting",
                                                "primary_dx_asthma", "comorbidity_codes"};
const std::vector<std::string> kFillsHeader = {"patient_id", "fill_date", "med_class"};
const std::vector<std::string> kEnrollmentHeader = {"patient_id", "start_date", "end_date"};

std::string basename_of(const std::string& path) {
  auto pos = path.find_last_of("/\\");
  return pos == std::string::npos ? path : path.substr(pos + 1);
}

csv::Table read_with_header(const std::string& path, const std::vector<std::string>& expected) {
  csv::Table table = csv::read_file(path);
  if (table.header != expected) {
    throw std::runtime_error("unexpected header in " + path + ": got '" +
                             csv::join_line(table.header) + "', want '" +
                             csv::join_line(expected) + "'");
  }
  return table;
}

std::optional<bool> parse_bool(const std::string& s) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  return std::nullopt;
}

std::vector<std::string> split_codes(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ';') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Per-file row loop with shared reject plumbing.
class RowSink {
 public:
  RowSink(std::string file, ParsedExtract& out) : file_(std::move(file)), out_(out) {
    out_.counts[file_];  // zero counts even for empty files
  }

  void reject(std::size_t line, std::string reason) {
    out_.rejects.push_back({file_, line, std::move(reason)});
    out_.counts[file_].rejected++;
  }
  void accept() { out_.counts[file_].accepted++; }
  const std::string& file() const { return file_; }

 private:
  std::string file_;
  ParsedExtract& out_;
};

}  // namespace

ParsedExtract parse_extract(const ExtractPaths& paths, const ExtractSchema& schema) {
  ParsedExtract out;
  const CodeMap& cm = schema.code_map;

  // patients
  {
    csv::Table t = read_with_header(paths.patients, kPatientsHeader);
    RowSink sink(basename_of(paths.patients), out);
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& r = t.rows[i];
      std::size_t line = t.line_numbers[i];
      if (r.size() != kPatientsHeader.size()) {
        sink.reject(line, "wrong column count");
        continue;
      }
      if (r[0].empty()) {
        sink.reject(line, "empty patient_id");
        continue;
      }
      if (!seen.insert(r[0]).second) {
        throw std::runtime_error("duplicate patient_id in " + paths.patients + ": " + r[0]);
      }
      auto birth = Date::parse_iso(r[1]);
      if (!birth) {
        sink.reject(line, "invalid date");
        continue;
      }
      auto gender = cm.map_gender(r[2]);
      if (!gender) {
        sink.reject(line, "unknown gender code '" + r[2] + "'");
        continue;
      }
      out.demographics.push_back({r[0], *birth, *gender});
      sink.accept();
    }
  }

  // claims
  {
    csv::Table t = read_with_header(paths.claims, kClaimsHeader);
    RowSink sink(basename_of(paths.claims), out);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& r = t.rows[i];
      std::size_t line = t.line_numbers[i];
      if (r.size() != kClaimsHeader.size()) {
        sink.reject(line, "wrong column count");
        continue;
      }
      if (r[0].empty()) {
        sink.reject(line, "empty patient_id");
        continue;
      }
      auto date = Date::parse_iso(r[1]);
      if (!date) {
        sink.reject(line, "invalid date");
        continue;
      }
      if (schema.study_window && !schema.study_window->contains(*date)) {
        sink.reject(line, "service_date outside study window");
        continue;
      }
      auto setting = cm.map_setting(r[2]);
      if (!setting) {
        sink.reject(line, "unknown setting code '" + r[2] + "'");
        continue;
      }
      auto primary = parse_bool(r[3]);
      if (!primary) {
        sink.reject(line, "invalid primary_dx_asthma '" + r[3] + "'");
        continue;
      }
      std::set<Comorbidity> comorbidities;
      bool bad_code = false;
      for (const auto& code : split_codes(r[4])) {
        auto c = cm.map_comorbidity(code);
        if (!c) {
          sink.reject(line, "unknown comorbidity code '" + code + "'");
          bad_code = true;
          break;
        }
        comorbidities.insert(*c);
      }
      if (bad_code) continue;
      out.claims.push_back({r[0], *date, *setting, *primary, std::move(comorbidities)});
      sink.accept();
    }
  }

  // fills
  {
    csv::Table t = read_with_header(paths.fills, kFillsHeader);
    RowSink sink(basename_of(paths.fills), out);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& r = t.rows[i];
      std::size_t line = t.line_numbers[i];
      if (r.size() != kFillsHeader.size()) {
        sink.reject(line, "wrong column count");
        continue;
      }
      if (r[0].empty()) {
        sink.reject(line, "empty patient_id");
        continue;
      }
      auto date = Date::parse_iso(r[1]);
      if (!date) {
        sink.reject(line, "invalid date");
        continue;
      }
      if (schema.study_window && !schema.study_window->contains(*date)) {
        sink.reject(line, "fill_date outside study window");
        continue;
      }
      auto med = cm.map_med_class(r[2]);
      if (!med) {
        sink.reject(line, "unknown med class code '" + r[2] + "'");
        continue;
      }
      out.fills.push_back({r[0], *date, *med});
      sink.accept();
    }
  }

  // enrollment
  {
    csv::Table t = read_with_header(paths.enrollment, kEnrollmentHeader);
    RowSink sink(basename_of(paths.enrollment), out);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& r = t.rows[i];
      std::size_t line = t.line_numbers[i];
      if (r.size() != kEnrollmentHeader.size()) {
        sink.reject(line, "wrong column count");
        continue;
      }
      if (r[0].empty()) {
        sink.reject(line, "empty patient_id");
        continue;
      }
      auto start = Date::parse_iso(r[1]);
      auto end = Date::parse_iso(r[2]);
      if (!start || !end) {
        sink.reject(line, "invalid date");
        continue;
      }
      if (*end < *start) {
        sink.reject(line, "end_date before start_date");
        continue;
      }
      out.spans.push_back({r[0], *start, *end});
      sink.accept();
    }
  }

  return out;
}

std::string serialize_patients(const std::vector<PatientDemographics>& rows) {
  std::string s = csv::join_line(kPatientsHeader) + "\n";
  for (const auto& r : rows) {
    s += csv::join_line({r.patient_id, r.birth_date.to_iso(), to_string(r.gender)}) + "\n";
  }
  return s;
}

std::string serialize_claims(const std::vector<ClaimRecord>& rows) {
  std::string s = csv::join_line(kClaimsHeader) + "\n";
  for (const auto& r : rows) {
    std::string codes;
    for (auto c : r.comorbidity_codes) {
      if (!codes.empty()) codes += ';';
      codes += to_string(c);
    }
    s += csv::join_line({r.patient_id, r.service_date.to_iso(), to_string(r.setting),
                         r.primary_dx_asthma ? "1" : "0", codes}) +
         "\n";
  }
  return s;
}

std::string serialize_fills(const std::vector<RxRecord>& rows) {
  std::string s = csv::join_line(kFillsHeader) + "\n";
  for (const auto& r : rows) {
    s += csv::join_line({r.patient_id, r.fill_date.to_iso(), to_string(r.med_class)}) + "\n";
  }
  return s;
}

std::string serialize_enrollment(const std::vector<EnrollmentSpan>& rows) {
  std::string s = csv::join_line(kEnrollmentHeader) + "\n";
  for (const auto& r : rows) {
    s += csv::join_line({r.patient_id, r.start_date.to_iso(), r.end_date.to_iso()}) + "\n";
  }
  return s;
}

std::string reject_report_csv(const std::vector<Reject>& rejects) {
  std::string s = "file,row,reason\n";
  for (const auto& r : rejects) {
    s += csv::join_line({r.file, std::to_string(r.row), r.reason}) + "\n";
  }
  return s;
}

void write_reject_report(const std::string& path, const std::vector<Reject>& rejects) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write reject report: " + path);
  out << reject_report_csv(rejects);
}

TimelineBuild build_timelines(const ParsedExtract& parsed) {
  TimelineBuild out;
  for (const auto& demo : parsed.demographics) {
    out.timelines[demo.patient_id].demographics = demo;
  }

  auto orphan = [&](const std::string& kind, const std::string& pid) {
    out.rejects.push_back({kind, 0, "orphan event for unknown patient_id '" + pid + "'"});
  };
  auto before_birth = [&](const std::string& kind, const std::string& pid) {
    out.rejects.push_back({kind, 0, "event precedes birth_date for patient '" + pid + "'"});
  };

  for (const auto& c : parsed.claims) {
    auto it = out.timelines.find(c.patient_id);
    if (it == out.timelines.end()) {
      orphan("claims", c.patient_id);
      continue;
    }
    if (c.service_date < it->second.demographics.birth_date) {
      before_birth("claims", c.patient_id);
      continue;
    }
    it->second.claims.push_back(c);
  }
  for (const auto& f : parsed.fills) {
    auto it = out.timelines.find(f.patient_id);
    if (it == out.timelines.end()) {
      orphan("fills", f.patient_id);
      continue;
    }
    if (f.fill_date < it->second.demographics.birth_date) {
      before_birth("fills", f.patient_id);
      continue;
    }
    it->second.fills.push_back(f);
  }
  for (const auto& s : parsed.spans) {
    auto it = out.timelines.find(s.patient_id);
    if (it == out.timelines.end()) {
      orphan("enrollment", s.patient_id);
      continue;
    }
    it->second.enrollment.push_back(s);
  }

  for (auto& [pid, tl] : out.timelines) {
    std::stable_sort(tl.claims.begin(), tl.claims.end(),
                     [](const ClaimRecord& a, const ClaimRecord& b) {
                       return a.service_date < b.service_date;
                     });
    std::stable_sort(tl.fills.begin(), tl.fills.end(),
                     [](const RxRecord& a, const RxRecord& b) { return a.fill_date < b.fill_date; });
    tl.enrollment = normalize_spans(std::move(tl.enrollment));
  }
  return out;
}

}  // namespace asthmarisk
