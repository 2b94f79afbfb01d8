#include "asthmarisk/synth.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "asthmarisk/cohort.hpp"
#include "asthmarisk/csv.hpp"
#include "asthmarisk/metrics.hpp"
#include "asthmarisk/rng.hpp"

namespace asthmarisk {

namespace {

constexpr int kLookbackDays = 365;
constexpr int kLabelDays = 91;
constexpr double kProbCap = 0.95;

enum class DecoyKind { None, Age, Cste, Enrollment };

std::string patient_id_for(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "P%07zu", index + 1);
  return buf;
}

std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double uniform(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double clamp_prob(double p) { return std::clamp(p, 0.0, kProbCap); }

// Evenly spread decoy flags: exactly round(fraction * n) patients.
bool is_decoy(std::size_t i, std::size_t n, std::size_t n_decoys) {
  return (i + 1) * n_decoys / n > i * n_decoys / n;
}

struct PatientRecords {
  PatientDemographics demo;
  std::vector<ClaimRecord> claims;
  std::vector<RxRecord> fills;
  std::vector<EnrollmentSpan> spans;
  int label = 0;
};

struct EventRates {
  double asthma_ed, asthma_ip, asthma_op;
  double other_ed, other_ip, other_op;
  double controller, reliever, ocs, other_fill;
};

EventRates rates_for(double severity, double adherence, double g) {
  EventRates r;
  r.asthma_ed = clamp_prob(0.012 + 0.40 * g * severity);
  r.asthma_ip = clamp_prob(0.004 + 0.12 * g * severity);
  r.asthma_op = clamp_prob(0.07 + 0.45 * g * severity);
  r.other_ed = 0.025;
  r.other_ip = 0.007;
  r.other_op = 0.11;
  r.controller = clamp_prob(0.06 + 0.75 * g * adherence);
  r.reliever = clamp_prob(0.05 + 0.65 * g * severity * (1.0 - 0.5 * adherence));
  r.ocs = clamp_prob(0.012 + 0.22 * g * severity);
  r.other_fill = 0.03;
  return r;
}

PatientRecords generate_patient(const SynthConfig& cfg, std::size_t index, DecoyKind decoy,
                                double severity, double adherence, double true_prob) {
  std::mt19937_64 rng = child_rng(cfg.seed, 2 * index + 1);
  double g = cfg.signal_strength;
  Date pred = cfg.prediction_date;

  PatientRecords p;
  p.demo.patient_id = patient_id_for(index);

  // Age: eligible draws keep a margin inside the funnel bounds so boundary
  // behaviour is exercised only by dedicated tests, not generator noise.
  double age;
  if (decoy == DecoyKind::Age) {
    age = uniform(rng) < 0.5 ? 0.1 * cfg.age_min_years + 0.6 * cfg.age_min_years * uniform(rng)
                             : cfg.age_max_years + 0.6 + 5.0 * uniform(rng);
  } else {
    double lo = cfg.age_min_years + 0.1;
    double hi = cfg.age_max_years - 0.5;
    if (decoy == DecoyKind::Enrollment) lo = std::max(lo, 2.0);  // gap must fit post-birth
    age = lo + (hi - lo) * uniform(rng);
  }
  p.demo.birth_date = pred.plus_days(-static_cast<int>(std::lround(age * 365.25)));
  p.demo.gender = uniform(rng) < 0.48 ? Gender::F : Gender::M;

  // Enrollment: full-study coverage minus gaps. Eligible gaps stay <= 40
  // days; the enrollment decoy gets one 120-day hole in the lookback.
  {
    std::vector<std::pair<Date, Date>> gaps;
    if (decoy == DecoyKind::Enrollment) {
      Date s = pred.plus_days(-250);
      gaps.emplace_back(s, s.plus_days(119));
    } else {
      double p_gap1 = clamp_prob(0.10 + 0.45 * g * (1.0 - adherence));
      double p_gap2 = clamp_prob(0.05 + 0.25 * g * (1.0 - adherence));
      if (uniform(rng) < p_gap1) {
        Date s = pred.plus_days(-uniform_int(rng, 200, 300));
        gaps.emplace_back(s, s.plus_days(uniform_int(rng, 4, 39)));
      }
      if (uniform(rng) < p_gap2) {
        Date s = pred.plus_days(-uniform_int(rng, 60, 155));
        gaps.emplace_back(s, s.plus_days(uniform_int(rng, 4, 39)));
      }
    }
    Date cursor = std::max(cfg.study_start, p.demo.birth_date);
    for (const auto& [gs, ge] : gaps) {
      if (ge < cursor) continue;
      if (gs > cursor) p.spans.push_back({p.demo.patient_id, cursor, gs.plus_days(-1)});
      cursor = std::max(cursor, ge.plus_days(1));
    }
    if (cursor <= cfg.study_end) {
      p.spans.push_back({p.demo.patient_id, cursor, cfg.study_end});
    }
  }

  // Comorbidity presence, attached to claims below.
  EventRates rates = rates_for(severity, adherence, g);
  std::array<std::pair<Comorbidity, double>, 6> comorbidity_probs = {{
      {Comorbidity::Obesity, clamp_prob(0.10 + 0.15 * g * severity)},
      {Comorbidity::SleepApnea, clamp_prob(0.03 + 0.08 * g * severity)},
      {Comorbidity::AllergicRhinitis, clamp_prob(0.15 + 0.20 * g * severity)},
      {Comorbidity::AtopicDermatitis, clamp_prob(0.08 + 0.10 * g * severity)},
      {Comorbidity::GERD, clamp_prob(0.04 + 0.06 * g * severity)},
      {Comorbidity::AnxietyDepression, clamp_prob(0.05 + 0.08 * g * severity)},
  }};
  std::set<Comorbidity> present;
  for (const auto& [c, prob] : comorbidity_probs) {
    if (uniform(rng) < prob) present.insert(c);
  }

  bool suppress_asthma = decoy == DecoyKind::Cste;

  auto add_claim = [&](Date date, Setting setting, bool asthma_primary) {
    if (date < p.demo.birth_date) return;
    ClaimRecord c;
    c.patient_id = p.demo.patient_id;
    c.service_date = date;
    c.setting = setting;
    c.primary_dx_asthma = asthma_primary && !suppress_asthma;
    for (Comorbidity cm : present) {
      if (uniform(rng) < 0.6) c.comorbidity_codes.insert(cm);
    }
    p.claims.push_back(std::move(c));
  };

  // Monthly Bernoulli process over the study window. Asthma-primary ED/IP
  // events stop at the prediction date; the only outcome-window events are
  // the planted ones, so realized prevalence tracks true_prob.
  for (Date month = cfg.study_start; month <= cfg.study_end; month = month.plus_months(1)) {
    Date next = month.plus_months(1);
    int month_len = std::min(next, cfg.study_end.plus_days(1)) - month;
    auto event_date = [&]() { return month.plus_days(uniform_int(rng, 0, month_len - 1)); };

    if (uniform(rng) < rates.asthma_ed) {
      Date d = event_date();
      if (d <= pred) add_claim(d, Setting::ED, true);
    }
    if (uniform(rng) < rates.asthma_ip) {
      Date d = event_date();
      if (d <= pred) add_claim(d, Setting::Inpatient, true);
    }
    if (uniform(rng) < rates.asthma_op) add_claim(event_date(), Setting::Outpatient, true);
    if (uniform(rng) < rates.other_ed) add_claim(event_date(), Setting::ED, false);
    if (uniform(rng) < rates.other_ip) add_claim(event_date(), Setting::Inpatient, false);
    if (uniform(rng) < rates.other_op) add_claim(event_date(), Setting::Outpatient, false);

    if (!suppress_asthma) {
      auto add_fill = [&](MedClass med) {
        Date d = event_date();
        if (d >= p.demo.birth_date) p.fills.push_back({p.demo.patient_id, d, med});
      };
      if (uniform(rng) < rates.controller) add_fill(MedClass::Controller);
      if (uniform(rng) < rates.reliever) add_fill(MedClass::Reliever);
      if (uniform(rng) < rates.ocs) add_fill(MedClass::OralCorticosteroid);
      if (uniform(rng) < rates.other_fill) add_fill(MedClass::OtherAsthma);
    }
  }

  // Anyone who is not a CSTE decoy must satisfy CSTE at the prediction date;
  // plant a fill when the monthly process came up empty.
  if (!suppress_asthma) {
    DateRange w = rule_window(pred, kLookbackDays);
    bool has_asthma_claim = false;
    for (const auto& c : p.claims) {
      if (c.primary_dx_asthma && w.contains(c.service_date)) {
        has_asthma_claim = true;
        break;
      }
    }
    bool has_fill = false;
    for (const auto& f : p.fills) {
      if (w.contains(f.fill_date)) {
        has_fill = true;
        break;
      }
    }
    if (!has_asthma_claim && !has_fill) {
      int oldest = std::min(kLookbackDays - 1, pred - p.demo.birth_date);
      Date d = pred.plus_days(-1 - uniform_int(rng, 0, oldest - 1));
      p.fills.push_back({p.demo.patient_id, d, MedClass::OtherAsthma});
    }
  }

  // Planted outcome: one asthma-primary ED claim in the label window.
  if (uniform(rng) < true_prob) {
    p.label = 1;
    Date d = pred.plus_days(1 + uniform_int(rng, 0, kLabelDays - 1));
    ClaimRecord c;
    c.patient_id = p.demo.patient_id;
    c.service_date = d;
    c.setting = Setting::ED;
    c.primary_dx_asthma = true;
    p.claims.push_back(std::move(c));
  }

  std::stable_sort(p.claims.begin(), p.claims.end(),
                   [](const ClaimRecord& a, const ClaimRecord& b) {
                     return a.service_date < b.service_date;
                   });
  std::stable_sort(p.fills.begin(), p.fills.end(),
                   [](const RxRecord& a, const RxRecord& b) { return a.fill_date < b.fill_date; });
  return p;
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.n_patients == 0) throw std::runtime_error("synth: n_patients must be positive");
  if (cfg.target_prevalence <= 0.0 || cfg.target_prevalence >= 1.0) {
    throw std::runtime_error("synth: target_prevalence must lie in (0, 1)");
  }
  if (cfg.decoy_fraction < 0.0 || cfg.decoy_fraction >= 1.0) {
    throw std::runtime_error("synth: decoy_fraction must lie in [0, 1)");
  }
  if (cfg.age_min_years <= 0.0 || cfg.age_min_years + 0.7 >= cfg.age_max_years) {
    throw std::runtime_error("synth: age range must be positive and at least 0.7 years wide");
  }
  int window = cfg.study_end - cfg.study_start + 1;
  if (window < kLookbackDays + kLabelDays) {
    throw std::runtime_error(
        "synth: study window is " + std::to_string(window) +
        " days but the 12-month lookback plus 3-month label window needs at least " +
        std::to_string(kLookbackDays + kLabelDays) +
        "; widen study_start/study_end");
  }
  if (cfg.prediction_date.plus_days(-kLookbackDays) < cfg.study_start ||
      cfg.study_end < cfg.prediction_date.plus_days(kLabelDays)) {
    throw std::runtime_error(
        "synth: prediction_date must sit at least 12 months after study_start and "
        "3 months before study_end");
  }
}

SynthOutput generate(const SynthConfig& cfg) {
  validate(cfg);
  std::size_t n = cfg.n_patients;
  auto n_decoys = static_cast<std::size_t>(std::llround(cfg.decoy_fraction * n));

  // Pass 1: latent profiles, then calibrate the outcome scale so the mean
  // true probability hits the target prevalence.
  std::vector<double> severity(n), adherence(n), raw_risk(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng = child_rng(cfg.seed, 2 * i);
    severity[i] = uniform(rng);
    adherence[i] = uniform(rng);
    raw_risk[i] = std::exp(cfg.signal_strength *
                           (6.0 * severity[i] + 3.0 * (1.0 - adherence[i])));
  }
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 200; ++iter) {
    double c = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double r : raw_risk) mean += std::min(c * r, kProbCap);
    mean /= static_cast<double>(n);
    (mean < cfg.target_prevalence ? lo : hi) = c;
  }
  double scale = 0.5 * (lo + hi);

  // Pass 2: per-patient histories and planted outcomes.
  SynthOutput out;
  std::vector<PatientDemographics> demographics;
  std::vector<ClaimRecord> claims;
  std::vector<RxRecord> fills;
  std::vector<EnrollmentSpan> spans;
  out.ground_truth.reserve(n);

  std::size_t decoy_ordinal = 0;
  std::size_t labelled = 0;
  for (std::size_t i = 0; i < n; ++i) {
    DecoyKind decoy = DecoyKind::None;
    if (n_decoys > 0 && is_decoy(i, n, n_decoys)) {
      constexpr std::array<DecoyKind, 3> kinds = {DecoyKind::Age, DecoyKind::Cste,
                                                  DecoyKind::Enrollment};
      decoy = kinds[decoy_ordinal++ % kinds.size()];
    }
    double true_prob = std::min(scale * raw_risk[i], kProbCap);
    PatientRecords p = generate_patient(cfg, i, decoy, severity[i], adherence[i], true_prob);

    demographics.push_back(p.demo);
    claims.insert(claims.end(), p.claims.begin(), p.claims.end());
    fills.insert(fills.end(), p.fills.begin(), p.fills.end());
    spans.insert(spans.end(), p.spans.begin(), p.spans.end());
    out.ground_truth.push_back({p.demo.patient_id, severity[i], true_prob, p.label});
    labelled += static_cast<std::size_t>(p.label);
  }

  out.patients_csv = serialize_patients(demographics);
  out.claims_csv = serialize_claims(claims);
  out.fills_csv = serialize_fills(fills);
  out.enrollment_csv = serialize_enrollment(spans);
  out.ground_truth_csv = serialize_ground_truth(out.ground_truth);
  out.realized_prevalence = static_cast<double>(labelled) / static_cast<double>(n);
  return out;
}

ExtractPaths write_synth_files(const SynthOutput& out, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&dir](const std::string& name, const std::string& content) {
    std::string path = dir + "/" + name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
    return path;
  };
  ExtractPaths paths;
  paths.patients = write("patients.csv", out.patients_csv);
  paths.claims = write("claims.csv", out.claims_csv);
  paths.fills = write("fills.csv", out.fills_csv);
  paths.enrollment = write("enrollment.csv", out.enrollment_csv);
  write("ground_truth.csv", out.ground_truth_csv);
  return paths;
}

std::string serialize_ground_truth(const std::vector<GroundTruthEntry>& entries) {
  std::string s = "patient_id,severity,true_prob,label\n";
  for (const auto& e : entries) {
    s += csv::join_line({e.patient_id, format_double(e.severity), format_double(e.true_prob),
                         std::to_string(e.label)}) +
         "\n";
  }
  return s;
}

std::vector<GroundTruthEntry> read_ground_truth_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  std::vector<std::string> expected = {"patient_id", "severity", "true_prob", "label"};
  if (t.header != expected) throw std::runtime_error("not a ground truth file: " + path);
  std::vector<GroundTruthEntry> entries;
  entries.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    if (r.size() != 4) throw std::runtime_error("ragged row in " + path);
    entries.push_back({r[0], std::stod(r[1]), std::stod(r[2]), std::stoi(r[3])});
  }
  return entries;
}

double bayes_auc(const std::vector<GroundTruthEntry>& entries) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(entries.size());
  labels.reserve(entries.size());
  for (const auto& e : entries) {
    scores.push_back(e.true_prob);
    labels.push_back(e.label);
  }
  return roc_auc(scores, labels);
}

}  // namespace asthmarisk
