#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "asthmarisk/extract.hpp"
#include "asthmarisk/records.hpp"

using namespace asthmarisk;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("claims_test_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

void put(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

ExtractPaths write_extract(const fs::path& dir, const std::string& patients,
                           const std::string& claims, const std::string& fills,
                           const std::string& enrollment) {
  put(dir / "patients.csv", patients);
  put(dir / "claims.csv", claims);
  put(dir / "fills.csv", fills);
  put(dir / "enrollment.csv", enrollment);
  return {(dir / "patients.csv").string(), (dir / "claims.csv").string(),
          (dir / "fills.csv").string(), (dir / "enrollment.csv").string()};
}

const std::string kPatientsHeader = "patient_id,birth_date,gender\n";
const std::string kClaimsHeader =
    "patient_id,service_date,setting,primary_dx_asthma,comorbidity_codes\n";
const std::string kFillsHeader = "patient_id,fill_date,med_class\n";
const std::string kEnrollmentHeader = "patient_id,start_date,end_date\n";

}  // namespace

TEST_CASE("iso date parsing accepts valid and rejects impossible dates") {
  auto d = Date::parse_iso("2013-07-01");
  REQUIRE(d.has_value());
  CHECK(d->to_iso() == "2013-07-01");
  CHECK(d->year() == 2013);
  CHECK(d->month() == 7);
  CHECK(d->day() == 1);

  CHECK_FALSE(Date::parse_iso("2014-13-01").has_value());  // impossible month
  CHECK_FALSE(Date::parse_iso("2013-02-29").has_value());  // not a leap year
  CHECK(Date::parse_iso("2012-02-29").has_value());
  CHECK_FALSE(Date::parse_iso("2013-7-1").has_value());
  CHECK_FALSE(Date::parse_iso("20130701").has_value());
  CHECK_FALSE(Date::parse_iso("2013-07-01x").has_value());
}

TEST_CASE("date arithmetic") {
  Date d = Date::from_ymd(2012, 7, 1);
  CHECK(d.plus_days(365).to_iso() == "2013-07-01");
  CHECK(d.plus_months(12).to_iso() == "2013-07-01");
  CHECK(Date::from_ymd(2013, 1, 31).plus_months(1).to_iso() == "2013-02-28");
  CHECK(Date::from_ymd(2013, 7, 1) - Date::from_ymd(2012, 7, 1) == 365);
  CHECK(age_years(Date::from_ymd(2000, 7, 1), Date::from_ymd(2013, 7, 1)) ==
        doctest::Approx(13.0).epsilon(0.01));
}

TEST_CASE("enrollment span merge handles adjacency and overlap") {
  std::string pid = "p1";
  SUBCASE("adjacent spans merge") {
    auto merged = normalize_spans({{pid, Date::from_ymd(2013, 1, 1), Date::from_ymd(2013, 3, 31)},
                                   {pid, Date::from_ymd(2013, 4, 1), Date::from_ymd(2013, 6, 30)}});
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].start_date.to_iso() == "2013-01-01");
    CHECK(merged[0].end_date.to_iso() == "2013-06-30");
  }
  SUBCASE("overlapping spans merge") {
    auto merged = normalize_spans({{pid, Date::from_ymd(2013, 1, 1), Date::from_ymd(2013, 3, 31)},
                                   {pid, Date::from_ymd(2013, 3, 1), Date::from_ymd(2013, 5, 31)}});
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].start_date.to_iso() == "2013-01-01");
    CHECK(merged[0].end_date.to_iso() == "2013-05-31");
  }
  SUBCASE("separated spans stay apart") {
    auto merged = normalize_spans({{pid, Date::from_ymd(2013, 1, 1), Date::from_ymd(2013, 1, 31)},
                                   {pid, Date::from_ymd(2013, 3, 1), Date::from_ymd(2013, 3, 31)}});
    CHECK(merged.size() == 2);
  }
}

TEST_CASE("span merge is idempotent on random inputs") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> start(0, 700), len(0, 90), count(1, 12);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<EnrollmentSpan> spans;
    int n = count(rng);
    for (int i = 0; i < n; ++i) {
      Date s = Date::from_ymd(2012, 1, 1).plus_days(start(rng));
      spans.push_back({"p", s, s.plus_days(len(rng))});
    }
    auto once = normalize_spans(spans);
    auto twice = normalize_spans(once);
    CHECK(once == twice);
    for (std::size_t i = 0; i + 1 < once.size(); ++i) {
      CHECK(once[i + 1].start_date - once[i].end_date > 1);  // no overlap, no adjacency
    }
  }
}

TEST_CASE("empty claims file with valid header parses to empty list") {
  auto dir = temp_dir();
  auto paths = write_extract(dir, kPatientsHeader + "p1,2005-06-01,F\n", kClaimsHeader,
                             kFillsHeader, kEnrollmentHeader);
  ParsedExtract out = parse_extract(paths, {});
  CHECK(out.claims.empty());
  CHECK(out.rejects.empty());
  CHECK(out.counts.at("claims.csv").accepted == 0);
  CHECK(out.counts.at("claims.csv").rejected == 0);
}

TEST_CASE("schema code map translates raw codes; canonical round-trip") {
  auto dir = temp_dir();
  auto paths = write_extract(
      dir, kPatientsHeader + "p1,2005-06-01,Female\n",
      kClaimsHeader + "p1,2013-02-03,ER,1,OSA;Obesity\n",
      kFillsHeader + "p1,2013-02-10,SABA\n", kEnrollmentHeader + "p1,2012-07-01,2014-06-30\n");
  ParsedExtract out = parse_extract(paths, {});
  REQUIRE(out.claims.size() == 1);
  CHECK(out.claims[0].setting == Setting::ED);  // ER alias
  CHECK(out.claims[0].primary_dx_asthma);
  CHECK(out.claims[0].comorbidity_codes ==
        std::set<Comorbidity>{Comorbidity::Obesity, Comorbidity::SleepApnea});
  REQUIRE(out.fills.size() == 1);
  CHECK(out.fills[0].med_class == MedClass::Reliever);
  CHECK(out.demographics[0].gender == Gender::F);

  // Canonical serialization uses enum names, so a reparse is a fixed point.
  std::string canonical = serialize_claims(out.claims);
  CHECK(canonical == kClaimsHeader + "p1,2013-02-03,ED,1,Obesity;SleepApnea\n");
  auto dir2 = temp_dir();
  auto paths2 = write_extract(dir2, serialize_patients(out.demographics), canonical,
                              serialize_fills(out.fills), serialize_enrollment(out.spans));
  ParsedExtract again = parse_extract(paths2, {});
  CHECK(again.rejects.empty());
  CHECK(serialize_claims(again.claims) == canonical);
  CHECK(serialize_patients(again.demographics) == serialize_patients(out.demographics));
  CHECK(serialize_fills(again.fills) == serialize_fills(out.fills));
  CHECK(serialize_enrollment(again.spans) == serialize_enrollment(out.spans));
}

TEST_CASE("row-level rejects carry file, row and reason") {
  auto dir = temp_dir();
  auto paths = write_extract(dir, kPatientsHeader + "p1,2005-06-01,F\n",
                             kClaimsHeader + "p1,2013-02-30,ED,1,\np1,2013-03-01,Spa,1,\n",
                             kFillsHeader + "p1,2014-13-01,Controller\n",
                             kEnrollmentHeader + "p1,2013-05-01,2013-04-01\n");
  ParsedExtract out = parse_extract(paths, {});
  REQUIRE(out.rejects.size() == 4);
  CHECK(out.rejects[0].file == "claims.csv");
  CHECK(out.rejects[0].row == 2);
  CHECK(out.rejects[0].reason == "invalid date");
  CHECK(out.rejects[1].reason == "unknown setting code 'Spa'");
  CHECK(out.rejects[2].file == "fills.csv");
  CHECK(out.rejects[2].reason == "invalid date");
  CHECK(out.rejects[3].reason == "end_date before start_date");
  CHECK(out.claims.empty());
  CHECK(out.counts.at("claims.csv").rejected == 2);
}

TEST_CASE("structural problems are fatal") {
  auto dir = temp_dir();
  SUBCASE("missing file") {
    ExtractPaths paths{(dir / "nope.csv").string(), (dir / "nope.csv").string(),
                       (dir / "nope.csv").string(), (dir / "nope.csv").string()};
    CHECK_THROWS_WITH_AS(parse_extract(paths, {}), doctest::Contains("cannot open file"),
                         std::runtime_error);
  }
  SUBCASE("wrong header") {
    auto paths =
        write_extract(dir, "id,dob,sex\n", kClaimsHeader, kFillsHeader, kEnrollmentHeader);
    CHECK_THROWS_WITH_AS(parse_extract(paths, {}), doctest::Contains("unexpected header"),
                         std::runtime_error);
  }
  SUBCASE("duplicate patient_id in demographics") {
    auto paths = write_extract(dir, kPatientsHeader + "p1,2005-06-01,F\np1,2006-01-01,M\n",
                               kClaimsHeader, kFillsHeader, kEnrollmentHeader);
    CHECK_THROWS_WITH_AS(parse_extract(paths, {}), doctest::Contains("duplicate patient_id"),
                         std::runtime_error);
  }
}

TEST_CASE("configured study window rejects out-of-range events") {
  auto dir = temp_dir();
  auto paths = write_extract(dir, kPatientsHeader + "p1,2005-06-01,F\n",
                             kClaimsHeader + "p1,2011-01-01,ED,1,\np1,2013-01-01,ED,1,\n",
                             kFillsHeader, kEnrollmentHeader);
  ExtractSchema schema;
  schema.study_window = DateRange{Date::from_ymd(2012, 7, 1), Date::from_ymd(2014, 7, 1)};
  ParsedExtract out = parse_extract(paths, schema);
  CHECK(out.claims.size() == 1);
  REQUIRE(out.rejects.size() == 1);
  CHECK(out.rejects[0].reason == "service_date outside study window");
}

TEST_CASE("build_timelines: orphans collected, events sorted, spans merged") {
  auto dir = temp_dir();
  auto paths = write_extract(
      dir, kPatientsHeader + "p1,2005-06-01,F\n",
      kClaimsHeader + "p1,2013-02-03,ED,1,\np1,2013-02-01,Outpatient,0,\n"
                      "ghost,2013-02-01,ED,1,\n",
      kFillsHeader + "p1,2013-02-10,Controller\n",
      kEnrollmentHeader + "p1,2012-07-01,2012-12-31\np1,2013-01-01,2013-06-30\n");
  ParsedExtract parsed = parse_extract(paths, {});
  TimelineBuild build = build_timelines(parsed);
  REQUIRE(build.rejects.size() == 1);
  CHECK(build.rejects[0].reason == "orphan event for unknown patient_id 'ghost'");
  REQUIRE(build.timelines.count("p1") == 1);
  const PatientTimeline& tl = build.timelines.at("p1");
  REQUIRE(tl.claims.size() == 2);
  CHECK(tl.claims[0].service_date < tl.claims[1].service_date);
  REQUIRE(tl.enrollment.size() == 1);  // adjacent spans merged
  CHECK(tl.enrollment[0].end_date.to_iso() == "2013-06-30");

  // Conservation: accepted events = timeline events + orphans.
  std::size_t timeline_claims = 0;
  for (const auto& [pid, t] : build.timelines) timeline_claims += t.claims.size();
  CHECK(timeline_claims + 1 == parsed.claims.size());
}

TEST_CASE("events dated before birth are rejected, not attached") {
  auto dir = temp_dir();
  auto paths = write_extract(dir, kPatientsHeader + "p1,2010-06-01,F\n",
                             kClaimsHeader + "p1,2009-01-01,ED,1,\np1,2012-01-01,ED,1,\n",
                             kFillsHeader + "p1,2008-01-01,Controller\n", kEnrollmentHeader);
  TimelineBuild build = build_timelines(parse_extract(paths, {}));
  REQUIRE(build.rejects.size() == 2);
  CHECK(build.rejects[0].reason == "event precedes birth_date for patient 'p1'");
  CHECK(build.timelines.at("p1").claims.size() == 1);
  CHECK(build.timelines.at("p1").fills.empty());
}

TEST_CASE("same-date events keep stable input order") {
  auto dir = temp_dir();
  auto paths = write_extract(dir, kPatientsHeader + "p1,2005-06-01,F\n",
                             kClaimsHeader + "p1,2013-02-03,ED,1,\np1,2013-02-03,Outpatient,0,\n"
                                             "p1,2013-02-03,Inpatient,1,\n",
                             kFillsHeader, kEnrollmentHeader);
  TimelineBuild build = build_timelines(parse_extract(paths, {}));
  const auto& claims = build.timelines.at("p1").claims;
  REQUIRE(claims.size() == 3);
  CHECK(claims[0].setting == Setting::ED);
  CHECK(claims[1].setting == Setting::Outpatient);
  CHECK(claims[2].setting == Setting::Inpatient);
}

TEST_CASE("round-trip property: serialize then parse is the identity") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> day(0, 600), count(0, 15), setting(0, 2), med(0, 3),
      coin(0, 1), comorb(0, 5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PatientDemographics> patients;
    std::vector<ClaimRecord> claims;
    std::vector<RxRecord> fills;
    std::vector<EnrollmentSpan> spans;
    int n = 1 + trial % 5;
    for (int i = 0; i < n; ++i) {
      std::string pid = "p" + std::to_string(trial) + "_" + std::to_string(i);
      patients.push_back({pid, Date::from_ymd(2004, 1, 1).plus_days(day(rng)),
                          coin(rng) ? Gender::F : Gender::M});
      int nc = count(rng);
      for (int k = 0; k < nc; ++k) {
        ClaimRecord c{pid, Date::from_ymd(2012, 7, 1).plus_days(day(rng)),
                      static_cast<Setting>(setting(rng)), coin(rng) == 1, {}};
        int ncm = comorb(rng) / 2;
        for (int m = 0; m < ncm; ++m) {
          c.comorbidity_codes.insert(static_cast<Comorbidity>(comorb(rng)));
        }
        claims.push_back(std::move(c));
      }
      int nf = count(rng);
      for (int k = 0; k < nf; ++k) {
        fills.push_back({pid, Date::from_ymd(2012, 7, 1).plus_days(day(rng)),
                         static_cast<MedClass>(med(rng))});
      }
      Date s = Date::from_ymd(2012, 7, 1).plus_days(day(rng));
      spans.push_back({pid, s, s.plus_days(day(rng))});
    }
    auto dir = temp_dir();
    auto paths = write_extract(dir, serialize_patients(patients), serialize_claims(claims),
                               serialize_fills(fills), serialize_enrollment(spans));
    ParsedExtract parsed = parse_extract(paths, {});
    CHECK(parsed.rejects.empty());
    CHECK(serialize_patients(parsed.demographics) == serialize_patients(patients));
    CHECK(serialize_claims(parsed.claims) == serialize_claims(claims));
    CHECK(serialize_fills(parsed.fills) == serialize_fills(fills));
    CHECK(serialize_enrollment(parsed.spans) == serialize_enrollment(spans));
  }
}
