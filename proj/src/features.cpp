#include "asthmarisk/features.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "asthmarisk/csv.hpp"
#include "asthmarisk/rng.hpp"

namespace asthmarisk {

namespace {

const std::array<std::string, 5> kCategoryNames = {"Demographics", "Medication", "Utilization",
                                                   "Comorbidity", "InsuranceGap"};
const std::array<std::string, 8> kExtractorNames = {
    "gender_flag",  "age_years",   "amr_ratio",       "fill_count",
    "distinct_med_classes", "claim_count", "comorbidity_flag", "insurance_gap_count"};
const std::array<std::string, 2> kLabelScopeNames = {"ed_only", "ed_or_ip"};
const std::array<std::string, 3> kResamplingNames = {"none", "oversample", "downsample"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string, N>& names, const std::string& s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

// Shortest round-trip decimal form; keeps file bytes deterministic.
std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

const std::string& to_string(FeatureCategory c) { return kCategoryNames[static_cast<int>(c)]; }
std::optional<FeatureCategory> feature_category_from_string(const std::string& s) {
  return lookup<FeatureCategory>(kCategoryNames, s);
}
const std::string& to_string(ExtractorKind k) { return kExtractorNames[static_cast<int>(k)]; }
std::optional<ExtractorKind> extractor_kind_from_string(const std::string& s) {
  return lookup<ExtractorKind>(kExtractorNames, s);
}
const std::string& to_string(LabelScope s) { return kLabelScopeNames[static_cast<int>(s)]; }
std::optional<LabelScope> label_scope_from_string(const std::string& s) {
  return lookup<LabelScope>(kLabelScopeNames, s);
}
const std::string& to_string(Resampling r) { return kResamplingNames[static_cast<int>(r)]; }
std::optional<Resampling> resampling_from_string(const std::string& s) {
  return lookup<Resampling>(kResamplingNames, s);
}

std::vector<FeatureSpec> default_registry() {
  std::vector<FeatureSpec> specs;
  auto add = [&specs](FeatureSpec s) { specs.push_back(std::move(s)); };

  // Demographics (2)
  add({.name = "gender",
       .category = FeatureCategory::Demographics,
       .extractor = ExtractorKind::GenderFlag,
       .binary = true});
  add({.name = "age_years",
       .category = FeatureCategory::Demographics,
       .extractor = ExtractorKind::AgeYears});

  // Medication (9)
  add({.name = "amr_12m",
       .category = FeatureCategory::Medication,
       .extractor = ExtractorKind::AmrRatio,
       .window_days = 365});
  const std::array<std::pair<std::string, int>, 3> horizons = {
      {{"3m", 91}, {"6m", 182}, {"12m", 365}}};
  for (const auto& [tag, days] : horizons) {
    add({.name = "controller_fills_" + tag,
         .category = FeatureCategory::Medication,
         .extractor = ExtractorKind::FillCount,
         .window_days = days,
         .med_class = MedClass::Controller});
  }
  for (const auto& [tag, days] : horizons) {
    add({.name = "reliever_fills_" + tag,
         .category = FeatureCategory::Medication,
         .extractor = ExtractorKind::FillCount,
         .window_days = days,
         .med_class = MedClass::Reliever});
  }
  add({.name = "oral_steroid_fills_12m",
       .category = FeatureCategory::Medication,
       .extractor = ExtractorKind::FillCount,
       .window_days = 365,
       .med_class = MedClass::OralCorticosteroid});
  add({.name = "distinct_med_classes_12m",
       .category = FeatureCategory::Medication,
       .extractor = ExtractorKind::DistinctMedClasses,
       .window_days = 365});

  // Utilization (15)
  struct Util {
    std::string prefix;
    Setting setting;
    bool asthma_only;
  };
  const std::array<Util, 5> utils = {{{"asthma_ed_", Setting::ED, true},
                                      {"asthma_ip_", Setting::Inpatient, true},
                                      {"asthma_op_", Setting::Outpatient, true},
                                      {"allcause_ed_", Setting::ED, false},
                                      {"allcause_ip_", Setting::Inpatient, false}}};
  for (const auto& u : utils) {
    for (const auto& [tag, days] : horizons) {
      add({.name = u.prefix + tag,
           .category = FeatureCategory::Utilization,
           .extractor = ExtractorKind::ClaimCount,
           .window_days = days,
           .setting = u.setting,
           .asthma_primary_only = u.asthma_only});
    }
  }

  // Comorbidity flags (6)
  const std::array<std::pair<std::string, Comorbidity>, 6> comorbidities = {
      {{"comorb_obesity", Comorbidity::Obesity},
       {"comorb_sleep_apnea", Comorbidity::SleepApnea},
       {"comorb_allergic_rhinitis", Comorbidity::AllergicRhinitis},
       {"comorb_atopic_dermatitis", Comorbidity::AtopicDermatitis},
       {"comorb_gerd", Comorbidity::GERD},
       {"comorb_anxiety_depression", Comorbidity::AnxietyDepression}}};
  for (const auto& [name, c] : comorbidities) {
    add({.name = name,
         .category = FeatureCategory::Comorbidity,
         .extractor = ExtractorKind::ComorbidityFlag,
         .window_days = 365,
         .comorbidity = c,
         .binary = true});
  }

  // Insurance gap (1)
  add({.name = "insurance_gap_count_12m",
       .category = FeatureCategory::InsuranceGap,
       .extractor = ExtractorKind::InsuranceGapCount,
       .window_days = 365});

  return specs;
}

std::vector<std::string> validate_registry(const std::vector<FeatureSpec>& specs, int lag_days) {
  std::vector<std::string> violations;
  int floor = min_window_days(lag_days);
  for (const auto& s : specs) {
    if (s.window_days && *s.window_days < floor) {
      violations.push_back(s.name + ": window " + std::to_string(*s.window_days) +
                           "d is under the " + std::to_string(floor) + "d minimum");
    }
  }
  return violations;
}

std::size_t FeatureMatrix::positives() const {
  std::size_t n = 0;
  for (int l : labels) n += static_cast<std::size_t>(l);
  return n;
}

std::vector<std::string> FeatureMatrix::feature_names() const {
  std::vector<std::string> names;
  names.reserve(columns.size());
  for (const auto& c : columns) names.push_back(c.name);
  return names;
}

namespace {

double eval_feature(const FeatureSpec& spec, const PatientTimeline& tl,
                    const PredictionContext& ctx) {
  Date pred = ctx.prediction_date;
  DateRange w = spec.window_days ? feature_window(pred, *spec.window_days)
                                 : feature_window(pred, ctx.lookback_days);
  switch (spec.extractor) {
    case ExtractorKind::GenderFlag:
      switch (tl.demographics.gender) {
        case Gender::F: return 1.0;
        case Gender::M: return 0.0;
        case Gender::Unknown: return 0.5;
      }
      return 0.5;
    case ExtractorKind::AgeYears:
      return age_years(tl.demographics.birth_date, pred);
    case ExtractorKind::AmrRatio: {
      auto r = amr(tl, w);
      return r ? *r : std::numeric_limits<double>::quiet_NaN();
    }
    case ExtractorKind::FillCount:
      return count_fills(tl, w, spec.med_class);
    case ExtractorKind::DistinctMedClasses: {
      std::set<MedClass> seen;
      for (const auto& f : tl.fills) {
        if (w.contains(f.fill_date)) seen.insert(f.med_class);
      }
      return static_cast<double>(seen.size());
    }
    case ExtractorKind::ClaimCount:
      return count_claims(tl, w, spec.setting, spec.asthma_primary_only);
    case ExtractorKind::ComorbidityFlag: {
      for (const auto& c : tl.claims) {
        if (w.contains(c.service_date) && spec.comorbidity &&
            c.comorbidity_codes.count(*spec.comorbidity)) {
          return 1.0;
        }
      }
      return 0.0;
    }
    case ExtractorKind::InsuranceGapCount: {
      // Distinct >0-day gaps between normalized spans intersecting the window.
      int gaps = 0;
      const auto& spans = tl.enrollment;
      for (std::size_t i = 0; i + 1 < spans.size(); ++i) {
        Date gap_start = spans[i].end_date.plus_days(1);
        Date gap_end = spans[i + 1].start_date.plus_days(-1);
        if (gap_end < gap_start) continue;
        if (gap_start < w.end && gap_end >= w.start) ++gaps;
      }
      return gaps;
    }
  }
  return 0.0;
}

}  // namespace

FeatureMatrix extract_features(const std::map<std::string, PatientTimeline>& timelines,
                               const std::vector<std::string>& eligible_ids,
                               const PredictionContext& ctx,
                               const std::vector<FeatureSpec>& registry, LabelScope scope) {
  FeatureMatrix m;
  m.columns = registry;
  m.row_keys.reserve(eligible_ids.size());
  m.values.reserve(eligible_ids.size() * registry.size());
  m.labels.reserve(eligible_ids.size());

  DateRange lw = label_window(ctx.prediction_date, ctx.label_days);
  for (const auto& pid : eligible_ids) {
    auto it = timelines.find(pid);
    if (it == timelines.end()) throw std::runtime_error("no timeline for patient " + pid);
    const PatientTimeline& tl = it->second;

    m.row_keys.push_back({pid, ctx.prediction_date});
    for (const auto& spec : registry) m.values.push_back(eval_feature(spec, tl, ctx));

    int label = count_claims(tl, lw, Setting::ED, true) >= 1 ? 1 : 0;
    if (!label && scope == LabelScope::EdOrInpatient) {
      label = count_claims(tl, lw, Setting::Inpatient, true) >= 1 ? 1 : 0;
    }
    m.labels.push_back(label);
  }
  return m;
}

namespace {

FeatureMatrix take_rows(const FeatureMatrix& m, const std::vector<std::size_t>& idx) {
  FeatureMatrix out;
  out.columns = m.columns;
  out.scaler = m.scaler;
  out.row_keys.reserve(idx.size());
  out.values.reserve(idx.size() * m.cols());
  out.labels.reserve(idx.size());
  for (std::size_t r : idx) {
    out.row_keys.push_back(m.row_keys[r]);
    out.labels.push_back(m.labels[r]);
    const double* row = m.row(r);
    out.values.insert(out.values.end(), row, row + m.cols());
  }
  return out;
}

}  // namespace

Split split_and_resample(const FeatureMatrix& matrix, const SplitPlan& plan) {
  std::size_t n = matrix.rows();
  if (n == 0) throw std::runtime_error("cannot split an empty matrix");
  std::size_t pos = matrix.positives();
  if (pos == 0 || pos == n) throw std::runtime_error("cannot split a single-class matrix");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng = child_rng(plan.seed, rng_stream::kSplit);
  std::shuffle(order.begin(), order.end(), rng);

  auto train_n = static_cast<std::size_t>(std::llround(plan.train_fraction * n));
  train_n = std::min(train_n, n);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + train_n);
  std::vector<std::size_t> test_idx(order.begin() + train_n, order.end());

  if (plan.resampling != Resampling::None) {
    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t r : train_idx) {
      (matrix.labels[r] ? pos_idx : neg_idx).push_back(r);
    }
    if (pos_idx.empty() || neg_idx.empty()) {
      throw std::runtime_error("training split is single-class; cannot resample");
    }
    auto& minority = pos_idx.size() <= neg_idx.size() ? pos_idx : neg_idx;
    auto& majority = pos_idx.size() <= neg_idx.size() ? neg_idx : pos_idx;
    std::mt19937_64 rng2 = child_rng(plan.seed, rng_stream::kSplit + 1);

    if (plan.resampling == Resampling::Oversample) {
      std::uniform_int_distribution<std::size_t> pick(0, minority.size() - 1);
      std::size_t deficit = majority.size() - minority.size();
      for (std::size_t i = 0; i < deficit; ++i) train_idx.push_back(minority[pick(rng2)]);
    } else {
      std::shuffle(majority.begin(), majority.end(), rng2);
      majority.resize(minority.size());
      train_idx.clear();
      train_idx.insert(train_idx.end(), minority.begin(), minority.end());
      train_idx.insert(train_idx.end(), majority.begin(), majority.end());
      std::sort(train_idx.begin(), train_idx.end());
    }
  }

  return {take_rows(matrix, train_idx), take_rows(matrix, test_idx)};
}

Scaler fit_scaler(const FeatureMatrix& train) {
  Scaler s;
  s.cols.resize(train.cols());
  for (std::size_t c = 0; c < train.cols(); ++c) {
    if (train.columns[c].binary) continue;  // stays (0, 1): identity
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t r = 0; r < train.rows(); ++r) {
      double v = train.at(r, c);
      if (std::isnan(v)) continue;
      sum += v;
      ++defined;
    }
    double mean = defined ? sum / static_cast<double>(defined) : 0.0;
    double ss = 0.0;
    for (std::size_t r = 0; r < train.rows(); ++r) {
      double v = train.at(r, c);
      if (std::isnan(v)) continue;
      ss += (v - mean) * (v - mean);
    }
    double sd = defined ? std::sqrt(ss / static_cast<double>(defined)) : 1.0;
    s.cols[c].mean = mean;
    s.cols[c].sd = sd > 0.0 ? sd : 1.0;  // constant column: center only
  }
  return s;
}

FeatureMatrix apply_scaler(FeatureMatrix matrix, const Scaler& scaler) {
  if (scaler.cols.size() != matrix.cols()) {
    throw std::runtime_error("scaler width does not match matrix");
  }
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (std::size_t c = 0; c < matrix.cols(); ++c) {
      if (matrix.columns[c].binary) continue;
      double& v = matrix.at(r, c);
      if (std::isnan(v)) v = scaler.cols[c].mean;  // impute to train mean
      v = (v - scaler.cols[c].mean) / scaler.cols[c].sd;
    }
  }
  matrix.scaler = scaler;
  return matrix;
}

namespace {

nlohmann::json spec_to_json(const FeatureSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["category"] = to_string(s.category);
  j["extractor"] = to_string(s.extractor);
  if (s.window_days) j["window_days"] = *s.window_days;
  if (s.med_class) j["med_class"] = to_string(*s.med_class);
  if (s.setting) j["setting"] = to_string(*s.setting);
  if (s.asthma_primary_only) j["asthma_primary_only"] = true;
  if (s.comorbidity) j["comorbidity"] = to_string(*s.comorbidity);
  if (s.binary) j["binary"] = true;
  return j;
}

FeatureSpec spec_from_json(const nlohmann::json& j) {
  FeatureSpec s;
  s.name = j.at("name").get<std::string>();
  s.category = *feature_category_from_string(j.at("category").get<std::string>());
  s.extractor = *extractor_kind_from_string(j.at("extractor").get<std::string>());
  if (j.contains("window_days")) s.window_days = j.at("window_days").get<int>();
  if (j.contains("med_class")) s.med_class = *med_class_from_string(j.at("med_class"));
  if (j.contains("setting")) s.setting = *setting_from_string(j.at("setting"));
  if (j.contains("asthma_primary_only")) s.asthma_primary_only = j.at("asthma_primary_only");
  if (j.contains("comorbidity")) s.comorbidity = *comorbidity_from_string(j.at("comorbidity"));
  if (j.contains("binary")) s.binary = j.at("binary");
  return s;
}

}  // namespace

std::string matrix_to_csv(const FeatureMatrix& m) {
  std::vector<std::string> header = {"patient_id", "prediction_date"};
  for (const auto& c : m.columns) header.push_back(c.name);
  header.push_back("label");
  std::string out = csv::join_line(header) + "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::vector<std::string> fields = {m.row_keys[r].patient_id,
                                       m.row_keys[r].prediction_date.to_iso()};
    for (std::size_t c = 0; c < m.cols(); ++c) fields.push_back(format_double(m.at(r, c)));
    fields.push_back(std::to_string(m.labels[r]));
    out += csv::join_line(fields) + "\n";
  }
  return out;
}

std::string matrix_sidecar_json(const FeatureMatrix& m, const PredictionContext& ctx,
                                std::uint64_t seed) {
  nlohmann::json sidecar;
  sidecar["registry"] = nlohmann::json::array();
  for (const auto& c : m.columns) sidecar["registry"].push_back(spec_to_json(c));
  if (m.scaler) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : m.scaler->cols) cols.push_back({{"mean", c.mean}, {"sd", c.sd}});
    sidecar["scaler"] = cols;
  }
  sidecar["context"] = {{"prediction_date", ctx.prediction_date.to_iso()},
                        {"lookback_days", ctx.lookback_days},
                        {"label_days", ctx.label_days},
                        {"lag_days", ctx.lag_days}};
  sidecar["seed"] = seed;
  return sidecar.dump(2) + "\n";
}

void write_matrix_csv(const std::string& path, const FeatureMatrix& m,
                      const PredictionContext& ctx, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write matrix: " + path);
  out << matrix_to_csv(m);
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("cannot write matrix sidecar: " + path + ".json");
  side << matrix_sidecar_json(m, ctx, seed);
}

FeatureMatrix read_matrix_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  if (t.header.size() < 3 || t.header[0] != "patient_id" || t.header[1] != "prediction_date" ||
      t.header.back() != "label") {
    throw std::runtime_error("not a feature matrix file: " + path);
  }
  FeatureMatrix m;

  std::ifstream side(path + ".json");
  if (side) {
    nlohmann::json sidecar;
    side >> sidecar;
    for (const auto& j : sidecar.at("registry")) m.columns.push_back(spec_from_json(j));
    if (sidecar.contains("scaler")) {
      Scaler s;
      for (const auto& j : sidecar.at("scaler")) {
        s.cols.push_back({j.at("mean").get<double>(), j.at("sd").get<double>()});
      }
      m.scaler = s;
    }
  } else {
    // No sidecar: reconstruct name-only specs from the header.
    for (std::size_t i = 2; i + 1 < t.header.size(); ++i) {
      FeatureSpec s;
      s.name = t.header[i];
      m.columns.push_back(std::move(s));
    }
  }
  std::size_t ncols = t.header.size() - 3;
  if (m.columns.size() != ncols) {
    throw std::runtime_error("matrix sidecar registry does not match header in " + path);
  }

  for (const auto& r : t.rows) {
    if (r.size() != t.header.size()) throw std::runtime_error("ragged row in " + path);
    auto date = Date::parse_iso(r[1]);
    if (!date) throw std::runtime_error("bad prediction_date in " + path);
    m.row_keys.push_back({r[0], *date});
    for (std::size_t c = 0; c < ncols; ++c) {
      m.values.push_back(std::stod(r[2 + c]));
    }
    m.labels.push_back(std::stoi(r.back()));
  }
  return m;
}

}  // namespace asthmarisk
