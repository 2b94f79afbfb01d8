#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "asthmarisk/cohort.hpp"
#include "oracles.hpp"
#include "rule_cases.hpp"

using namespace asthmarisk;

namespace {

const Date kAsOf = Date::from_ymd(2013, 7, 1);

PatientTimeline with_fills(int controller, int reliever) {
  PatientTimeline tl;
  tl.demographics.patient_id = "p";
  tl.demographics.birth_date = kAsOf.plus_days(-3650);
  for (int i = 0; i < controller; ++i) {
    tl.fills.push_back({"p", kAsOf.plus_days(-30 - i), MedClass::Controller});
  }
  for (int i = 0; i < reliever; ++i) {
    tl.fills.push_back({"p", kAsOf.plus_days(-60 - i), MedClass::Reliever});
  }
  return tl;
}

PatientTimeline eligible_timeline(const std::string& pid, Date birth) {
  PatientTimeline tl;
  tl.demographics = {pid, birth, Gender::F};
  tl.claims.push_back({pid, kAsOf.plus_days(-60), Setting::ED, true, {}});
  tl.enrollment.push_back({pid, Date::from_ymd(2012, 1, 1), Date::from_ymd(2014, 6, 30)});
  return tl;
}

}  // namespace

TEST_CASE("amr follows the controller-to-total ratio") {
  DateRange w = rule_window(kAsOf, 365);
  CHECK(amr(with_fills(3, 1), w) == doctest::Approx(0.75));
  CHECK_FALSE(amr(with_fills(0, 0), w).has_value());

  auto low = amr(with_fills(1, 3), w);
  REQUIRE(low.has_value());
  CHECK(*low == doctest::Approx(0.25));
  CHECK(amr_high_risk(*low));
  CHECK_FALSE(amr_high_risk(0.5));  // the flag is strictly below 0.5
  CHECK_FALSE(amr_high_risk(0.75));

  // Only controller and reliever fills enter the ratio.
  PatientTimeline tl = with_fills(1, 1);
  tl.fills.push_back({"p", kAsOf.plus_days(-10), MedClass::OralCorticosteroid});
  tl.fills.push_back({"p", kAsOf.plus_days(-11), MedClass::OtherAsthma});
  CHECK(amr(tl, w) == doctest::Approx(0.5));
}

TEST_CASE("amr stays in [0,1] and never decreases with one more controller fill") {
  std::mt19937_64 rng(11);
  DateRange w = rule_window(kAsOf, 365);
  for (int trial = 0; trial < 2000; ++trial) {
    PatientTimeline tl = oracles::random_timeline(rng, kAsOf);
    auto before = amr(tl, w);
    if (before) {
      CHECK(*before >= 0.0);
      CHECK(*before <= 1.0);
    }
    tl.fills.push_back({"prop", kAsOf.plus_days(-5), MedClass::Controller});
    auto after = amr(tl, w);
    REQUIRE(after.has_value());
    if (before) CHECK(*after >= *before - 1e-12);
  }
}

TEST_CASE("cste probable asthma covers visits, fills and boundaries") {
  SUBCASE("asthma-primary ED two months back") {
    PatientTimeline tl;
    tl.claims.push_back({"p", kAsOf.plus_days(-61), Setting::ED, true, {}});
    CHECK(cste_probable_asthma(tl, kAsOf));
  }
  SUBCASE("non-primary outpatient does not qualify") {
    PatientTimeline tl;
    tl.claims.push_back({"p", kAsOf.plus_days(-61), Setting::Outpatient, false, {}});
    CHECK_FALSE(cste_probable_asthma(tl, kAsOf));
  }
  SUBCASE("single reliever fill 11 months back qualifies") {
    PatientTimeline tl;
    tl.fills.push_back({"p", kAsOf.plus_days(-334), MedClass::Reliever});
    CHECK(cste_probable_asthma(tl, kAsOf));
  }
}

TEST_CASE("hedis defaults: branch table spot checks") {
  HedisThresholds cfg;
  SUBCASE("four fills of any class") {
    PatientTimeline tl = with_fills(4, 0);
    CHECK(hedis_persistent_asthma(tl, kAsOf, cfg));
  }
  SUBCASE("three outpatient visits and one fill is not persistent") {
    PatientTimeline tl = with_fills(1, 0);
    for (int i = 0; i < 3; ++i) {
      tl.claims.push_back({"p", kAsOf.plus_days(-100 - i), Setting::Outpatient, true, {}});
    }
    CHECK_FALSE(hedis_persistent_asthma(tl, kAsOf, cfg));
    CHECK(cste_probable_asthma(tl, kAsOf));
  }
  SUBCASE("custom thresholds are honored") {
    HedisThresholds strict;
    strict.fills_min = 6;
    PatientTimeline tl = with_fills(5, 0);
    CHECK_FALSE(hedis_persistent_asthma(tl, kAsOf, strict));
    CHECK(hedis_persistent_asthma(tl, kAsOf, cfg));
  }
}

TEST_CASE("rule truth table classifies all 40 hand-built timelines") {
  auto cases = rule_cases::all_cases();
  REQUIRE(cases.size() == 40);
  for (const auto& c : cases) {
    CAPTURE(c.name);
    PatientTimeline tl = rule_cases::build_timeline(c, kAsOf);
    CHECK(cste_probable_asthma(tl, kAsOf) == c.expect_cste);
    CHECK(hedis_persistent_asthma(tl, kAsOf) == c.expect_hedis);
  }
}

TEST_CASE("hedis implies cste on random timelines") {
  std::mt19937_64 rng(123);
  int hedis_hits = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    PatientTimeline tl = oracles::random_timeline(rng, kAsOf);
    if (hedis_persistent_asthma(tl, kAsOf)) {
      ++hedis_hits;
      CHECK(cste_probable_asthma(tl, kAsOf));
    }
  }
  CHECK(hedis_hits > 100);  // the property must actually get exercised
}

TEST_CASE("cohort funnel: stages, first-failure attribution, reconciliation") {
  std::map<std::string, PatientTimeline> timelines;

  // too young: 0.4 years at prediction date
  timelines["too_young"] =
      eligible_timeline("too_young", kAsOf.plus_days(-static_cast<int>(0.4 * 365.25)));
  // exactly 18 years: inclusive upper bound
  timelines["exactly_18"] =
      eligible_timeline("exactly_18", kAsOf.plus_days(-static_cast<int>(18 * 365.25)));
  // fails CSTE: no asthma history at all
  {
    PatientTimeline tl = eligible_timeline("no_asthma", kAsOf.plus_days(-3000));
    tl.claims.clear();
    timelines["no_asthma"] = tl;
  }
  // fails enrollment: 46-day gap inside the lookback
  {
    PatientTimeline tl = eligible_timeline("gap46", kAsOf.plus_days(-3000));
    tl.enrollment = {{"gap46", Date::from_ymd(2012, 1, 1), kAsOf.plus_days(-200)},
                     {"gap46", kAsOf.plus_days(-153), Date::from_ymd(2014, 6, 30)}};
    timelines["gap46"] = tl;
  }
  // enrollment gap of exactly 45 days is tolerated
  {
    PatientTimeline tl = eligible_timeline("gap45", kAsOf.plus_days(-3000));
    tl.enrollment = {{"gap45", Date::from_ymd(2012, 1, 1), kAsOf.plus_days(-200)},
                     {"gap45", kAsOf.plus_days(-154), Date::from_ymd(2014, 6, 30)}};
    timelines["gap45"] = tl;
  }
  // age decoy is not tested further: age failure only
  {
    PatientTimeline tl = eligible_timeline("young_no_asthma", kAsOf.plus_days(-30));
    tl.claims.clear();
    tl.fills.clear();
    timelines["young_no_asthma"] = tl;
  }
  timelines["ok"] = eligible_timeline("ok", kAsOf.plus_days(-3000));

  PredictionContext ctx{kAsOf};
  CohortResult result = select_cohort(timelines, ctx);

  std::map<std::string, CohortDecision> by_id;
  for (const auto& d : result.decisions) by_id[d.patient_id] = d;

  CHECK_FALSE(by_id.at("too_young").eligible);
  CHECK(by_id.at("too_young").failed_stages ==
        std::vector<CohortStage>{CohortStage::AgeRange});
  CHECK(by_id.at("exactly_18").eligible);
  CHECK(by_id.at("no_asthma").failed_stages == std::vector<CohortStage>{CohortStage::CSTE});
  CHECK(by_id.at("gap46").failed_stages ==
        std::vector<CohortStage>{CohortStage::ContinuousEnrollment});
  CHECK(by_id.at("gap45").eligible);
  CHECK(by_id.at("young_no_asthma").failed_stages ==
        std::vector<CohortStage>{CohortStage::AgeRange});  // first failure only
  CHECK(by_id.at("ok").eligible);

  CHECK(result.funnel.input == timelines.size());
  CHECK(result.funnel.input == result.funnel.eligible + result.funnel.failed_age +
                                   result.funnel.failed_cste + result.funnel.failed_enrollment);
  for (const auto& d : result.decisions) {
    CHECK(d.eligible == d.failed_stages.empty());
  }
}

TEST_CASE("age bounds are inclusive at exact equality") {
  // 18 years is 6574.5 days, which no calendar date hits; pin the boundary
  // policy with a bound that is exactly representable in whole days.
  std::map<std::string, PatientTimeline> timelines;
  timelines["at_bound"] = eligible_timeline("at_bound", kAsOf.plus_days(-6574));
  timelines["past_bound"] = eligible_timeline("past_bound", kAsOf.plus_days(-6575));
  AgeBounds bounds{0.5, 6574.0 / 365.25};
  CohortResult result = select_cohort(timelines, PredictionContext{kAsOf}, bounds);
  CHECK(result.decisions[0].patient_id == "at_bound");
  CHECK(result.decisions[0].eligible);  // age == max_years stays in
  CHECK_FALSE(result.decisions[1].eligible);
  CHECK(result.decisions[1].failed_stages ==
        std::vector<CohortStage>{CohortStage::AgeRange});

  // Same at the lower end: exactly min_years is eligible.
  std::map<std::string, PatientTimeline> young;
  young["at_min"] = eligible_timeline("at_min", kAsOf.plus_days(-183));
  young["under_min"] = eligible_timeline("under_min", kAsOf.plus_days(-182));
  AgeBounds low{183.0 / 365.25, 18.0};
  CohortResult r2 = select_cohort(young, PredictionContext{kAsOf}, low);
  CHECK(r2.decisions[0].eligible);
  CHECK_FALSE(r2.decisions[1].eligible);
}

TEST_CASE("funnel reconciliation holds on random populations") {
  std::mt19937_64 rng(77);
  std::map<std::string, PatientTimeline> timelines;
  std::uniform_int_distribution<int> birth_days(100, 8000);
  for (int i = 0; i < 500; ++i) {
    PatientTimeline tl = oracles::random_timeline(rng, kAsOf);
    std::string pid = "r" + std::to_string(i);
    tl.demographics.patient_id = pid;
    tl.demographics.birth_date = kAsOf.plus_days(-birth_days(rng));
    if (i % 3 != 0) {
      tl.enrollment.push_back({pid, Date::from_ymd(2012, 1, 1), Date::from_ymd(2014, 6, 30)});
    }
    timelines[pid] = tl;
  }
  CohortResult result = select_cohort(timelines, PredictionContext{kAsOf});
  CHECK(result.funnel.input == 500);
  CHECK(result.funnel.input == result.funnel.eligible + result.funnel.failed_age +
                                   result.funnel.failed_cste + result.funnel.failed_enrollment);

  // Deterministic: a second pass gives identical decisions.
  CohortResult again = select_cohort(timelines, PredictionContext{kAsOf});
  REQUIRE(again.decisions.size() == result.decisions.size());
  for (std::size_t i = 0; i < result.decisions.size(); ++i) {
    CHECK(again.decisions[i].patient_id == result.decisions[i].patient_id);
    CHECK(again.decisions[i].eligible == result.decisions[i].eligible);
  }
}

TEST_CASE("funnel json shape") {
  FunnelSummary funnel;
  funnel.input = 10;
  funnel.failed_age = 2;
  funnel.failed_cste = 3;
  funnel.failed_enrollment = 1;
  funnel.eligible = 4;
  std::string j = funnel.to_json();
  CHECK(j.find("\"input\": 10") != std::string::npos);
  CHECK(j.find("\"stage\": \"AgeRange\", \"failed\": 2, \"surviving\": 8") != std::string::npos);
  CHECK(j.find("\"stage\": \"CSTE\", \"failed\": 3, \"surviving\": 5") != std::string::npos);
  CHECK(j.find("\"eligible\": 4") != std::string::npos);
}
