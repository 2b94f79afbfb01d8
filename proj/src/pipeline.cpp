#include "asthmarisk/pipeline.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "asthmarisk/hash.hpp"
#include "asthmarisk/report.hpp"

namespace asthmarisk {

namespace fs = std::filesystem;

const std::string& to_string(ModelChoice m) {
  static const std::array<std::string, 3> names = {"lasso", "ann", "both"};
  return names[static_cast<int>(m)];
}

std::optional<ModelChoice> model_choice_from_string(const std::string& s) {
  if (s == "lasso") return ModelChoice::Lasso;
  if (s == "ann") return ModelChoice::Ann;
  if (s == "both") return ModelChoice::Both;
  return std::nullopt;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

Date parse_date_or_throw(const std::string& key, const std::string& value) {
  auto d = Date::parse_iso(value);
  if (!d) throw std::runtime_error("config " + key + ": invalid date '" + value + "'");
  return *d;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    throw std::runtime_error("config " + key + ": invalid number '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    return std::stoll(value);
  } catch (const std::exception&) {
    throw std::runtime_error("config " + key + ": invalid integer '" + value + "'");
  }
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

void apply_config(const std::map<std::string, std::string>& kv, RunConfig& cfg) {
  for (const auto& [key, value] : kv) {
    if (key == "mode") {
      if (value != "synth" && value != "ingest") {
        throw std::runtime_error("config mode: expected synth or ingest, got '" + value + "'");
      }
      cfg.mode = value;
    } else if (key == "n_patients") {
      cfg.synth.n_patients = static_cast<std::size_t>(parse_int(key, value));
    } else if (key == "study_start") {
      cfg.synth.study_start = parse_date_or_throw(key, value);
    } else if (key == "study_end") {
      cfg.synth.study_end = parse_date_or_throw(key, value);
    } else if (key == "prediction_date") {
      cfg.prediction_date = parse_date_or_throw(key, value);
      cfg.synth.prediction_date = *cfg.prediction_date;
    } else if (key == "target_prevalence") {
      cfg.synth.target_prevalence = parse_double(key, value);
    } else if (key == "signal_strength") {
      cfg.synth.signal_strength = parse_double(key, value);
    } else if (key == "decoy_fraction") {
      cfg.synth.decoy_fraction = parse_double(key, value);
    } else if (key == "patients") {
      cfg.inputs.patients = value;
    } else if (key == "claims") {
      cfg.inputs.claims = value;
    } else if (key == "fills") {
      cfg.inputs.fills = value;
    } else if (key == "enrollment") {
      cfg.inputs.enrollment = value;
    } else if (key == "code_map") {
      cfg.code_map_path = value;
    } else if (key == "label_scope") {
      auto s = label_scope_from_string(value);
      if (!s) throw std::runtime_error("config label_scope: unknown value '" + value + "'");
      cfg.label_scope = *s;
    } else if (key == "models") {
      auto m = model_choice_from_string(value);
      if (!m) throw std::runtime_error("config models: unknown value '" + value + "'");
      cfg.models = *m;
    } else if (key == "resampling") {
      auto r = resampling_from_string(value);
      if (!r) throw std::runtime_error("config resampling: unknown value '" + value + "'");
      cfg.resampling = *r;
    } else if (key == "train_fraction") {
      cfg.train_fraction = parse_double(key, value);
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "outdir") {
      cfg.outdir = value;
    } else if (key == "hidden_sizes") {
      std::vector<int> sizes;
      std::stringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ',')) sizes.push_back(static_cast<int>(parse_int(key, tok)));
      if (sizes.empty()) throw std::runtime_error("config hidden_sizes: empty list");
      cfg.mlp.hidden_sizes = sizes;
    } else if (key == "dropout_rate") {
      cfg.mlp.dropout_rate = parse_double(key, value);
    } else if (key == "learning_rate") {
      cfg.mlp.learning_rate = parse_double(key, value);
    } else if (key == "batch_size") {
      cfg.mlp.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "epochs") {
      cfg.mlp.epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "leaky_alpha") {
      cfg.mlp.leaky_alpha = parse_double(key, value);
    } else if (key == "lasso_max_iter") {
      cfg.lasso.max_iter = static_cast<int>(parse_int(key, value));
    } else if (key == "lasso_tol") {
      cfg.lasso.tol = parse_double(key, value);
    } else if (key == "age_min_years") {
      cfg.age.min_years = parse_double(key, value);
    } else if (key == "age_max_years") {
      cfg.age.max_years = parse_double(key, value);
    } else if (key == "max_gap_days") {
      cfg.enrollment.max_gap_days = static_cast<int>(parse_int(key, value));
    } else if (key == "generated_at") {
      cfg.generated_at = value;
    } else {
      throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }
}

std::string canonical_config(const RunConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["mode"] = cfg.mode;
  kv["n_patients"] = std::to_string(cfg.synth.n_patients);
  kv["study_start"] = cfg.synth.study_start.to_iso();
  kv["study_end"] = cfg.synth.study_end.to_iso();
  kv["prediction_date"] = cfg.effective_prediction_date().to_iso();
  kv["target_prevalence"] = std::to_string(cfg.synth.target_prevalence);
  kv["signal_strength"] = std::to_string(cfg.synth.signal_strength);
  kv["decoy_fraction"] = std::to_string(cfg.synth.decoy_fraction);
  kv["patients"] = cfg.inputs.patients;
  kv["claims"] = cfg.inputs.claims;
  kv["fills"] = cfg.inputs.fills;
  kv["enrollment"] = cfg.inputs.enrollment;
  kv["code_map"] = cfg.code_map_path;
  kv["label_scope"] = to_string(cfg.label_scope);
  kv["models"] = to_string(cfg.models);
  kv["resampling"] = to_string(cfg.resampling);
  kv["train_fraction"] = std::to_string(cfg.train_fraction);
  kv["seed"] = std::to_string(cfg.seed);
  std::string hidden;
  for (int h : cfg.mlp.hidden_sizes) {
    if (!hidden.empty()) hidden += ',';
    hidden += std::to_string(h);
  }
  kv["hidden_sizes"] = hidden;
  kv["dropout_rate"] = std::to_string(cfg.mlp.dropout_rate);
  kv["learning_rate"] = std::to_string(cfg.mlp.learning_rate);
  kv["batch_size"] = std::to_string(cfg.mlp.batch_size);
  kv["epochs"] = std::to_string(cfg.mlp.epochs);
  kv["leaky_alpha"] = std::to_string(cfg.mlp.leaky_alpha);
  kv["lasso_max_iter"] = std::to_string(cfg.lasso.max_iter);
  kv["lasso_tol"] = std::to_string(cfg.lasso.tol);
  kv["age_min_years"] = std::to_string(cfg.age.min_years);
  kv["age_max_years"] = std::to_string(cfg.age.max_years);
  kv["max_gap_days"] = std::to_string(cfg.enrollment.max_gap_days);
  kv["generated_at"] = cfg.generated_at;

  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

ArtifactWriter::ArtifactWriter(std::string outdir) : outdir_(std::move(outdir)) {
  fs::create_directories(outdir_);
}

std::string ArtifactWriter::abs_path(const std::string& relpath) const {
  return outdir_ + "/" + relpath;
}

void ArtifactWriter::write(const std::string& relpath, const std::string& content) {
  fs::path full = fs::path(outdir_) / relpath;
  fs::create_directories(full.parent_path());
  fs::path partial = full;
  partial += ".partial";
  {
    std::ofstream out(partial, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + partial.string());
    out << content;
  }
  pending_.push_back({relpath, sha256_hex(content), content.size()});
}

void ArtifactWriter::commit() {
  for (const auto& entry : pending_) {
    fs::path full = fs::path(outdir_) / entry.path;
    fs::path partial = full;
    partial += ".partial";
    fs::rename(partial, full);
    committed_.push_back(entry);
  }
  pending_.clear();
}

void ArtifactWriter::write_manifest(const std::string& config_hash, std::uint64_t seed) const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  nlohmann::json artifacts = nlohmann::json::array();
  std::vector<Entry> sorted = committed_;
  std::sort(sorted.begin(), sorted.end(),
            [](const Entry& a, const Entry& b) { return a.path < b.path; });
  for (const auto& e : sorted) {
    artifacts.push_back({{"path", e.path}, {"sha256", e.sha256}, {"bytes", e.bytes}});
  }
  j["artifacts"] = artifacts;
  std::ofstream out(abs_path("manifest.json"), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest");
  out << j.dump(2) << "\n";
}

namespace {

std::string format_fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg) {
  PipelineResult result;
  ArtifactWriter writer(cfg.outdir);

  PredictionContext ctx = cfg.context();
  std::string generated_at =
      cfg.generated_at.empty() ? ctx.prediction_date.to_iso() : cfg.generated_at;

  // Stage 1: obtain an extract (generate or take the provided files).
  ExtractPaths extract_paths;
  std::vector<GroundTruthEntry> ground_truth;
  if (cfg.mode == "synth") {
    SynthConfig synth_cfg = cfg.synth;
    synth_cfg.prediction_date = ctx.prediction_date;
    synth_cfg.seed = cfg.seed;
    SynthOutput synth = generate(synth_cfg);
    writer.write("extract/patients.csv", synth.patients_csv);
    writer.write("extract/claims.csv", synth.claims_csv);
    writer.write("extract/fills.csv", synth.fills_csv);
    writer.write("extract/enrollment.csv", synth.enrollment_csv);
    writer.write("extract/ground_truth.csv", synth.ground_truth_csv);
    writer.commit();
    extract_paths = {writer.abs_path("extract/patients.csv"),
                     writer.abs_path("extract/claims.csv"),
                     writer.abs_path("extract/fills.csv"),
                     writer.abs_path("extract/enrollment.csv")};
    ground_truth = std::move(synth.ground_truth);
    result.bayes_auc_all = bayes_auc(ground_truth);
  } else if (cfg.mode == "ingest") {
    extract_paths = cfg.inputs;
  } else {
    throw std::runtime_error("unknown mode '" + cfg.mode + "'");
  }

  // Stage 2: parse + timelines.
  ExtractSchema schema;
  if (!cfg.code_map_path.empty()) schema.code_map = CodeMap::load_json(cfg.code_map_path);
  ParsedExtract parsed = parse_extract(extract_paths, schema);
  TimelineBuild build = build_timelines(parsed);
  std::vector<Reject> all_rejects = parsed.rejects;
  all_rejects.insert(all_rejects.end(), build.rejects.begin(), build.rejects.end());
  writer.write("ingest/rejects.csv", reject_report_csv(all_rejects));
  writer.commit();

  // Stage 3: cohort funnel.
  CohortResult cohort = select_cohort(build.timelines, ctx, cfg.age, cfg.enrollment);
  result.funnel = cohort.funnel;
  writer.write("cohort/funnel.json", cohort.funnel.to_json());
  writer.write("cohort/decisions.csv", decisions_to_csv(cohort.decisions));
  writer.commit();

  // Stage 4: features + labels on the eligible cohort.
  std::vector<FeatureSpec> registry = default_registry();
  std::vector<std::string> violations = validate_registry(registry, ctx.lag_days);
  if (!violations.empty()) {
    std::string msg = "feature registry violates the lag window rule:";
    for (const auto& v : violations) msg += " " + v + ";";
    throw std::runtime_error(msg);
  }
  std::vector<std::string> eligible;
  for (const auto& d : cohort.decisions) {
    if (d.eligible) eligible.push_back(d.patient_id);
  }
  FeatureMatrix matrix =
      extract_features(build.timelines, eligible, ctx, registry, cfg.label_scope);
  result.rows = matrix.rows();
  result.prevalence =
      matrix.rows() ? static_cast<double>(matrix.positives()) / matrix.rows() : 0.0;
  writer.write("features/features.csv", matrix_to_csv(matrix));
  writer.write("features/features.csv.json", matrix_sidecar_json(matrix, ctx, cfg.seed));
  writer.commit();

  // Stage 5: split, resample (train side only), standardize on train stats.
  SplitPlan plan{cfg.seed, cfg.train_fraction, cfg.resampling};
  Split split = split_and_resample(matrix, plan);
  Scaler scaler = fit_scaler(split.train);
  FeatureMatrix train = apply_scaler(std::move(split.train), scaler);
  FeatureMatrix test = apply_scaler(std::move(split.test), scaler);
  result.train_rows = train.rows();
  result.test_rows = test.rows();
  writer.write("features/train_matrix.csv", matrix_to_csv(train));
  writer.write("features/train_matrix.csv.json", matrix_sidecar_json(train, ctx, cfg.seed));
  writer.write("features/test_matrix.csv", matrix_to_csv(test));
  writer.write("features/test_matrix.csv.json", matrix_sidecar_json(test, ctx, cfg.seed));
  writer.commit();

  if (!ground_truth.empty()) {
    std::unordered_map<std::string, const GroundTruthEntry*> by_id;
    for (const auto& e : ground_truth) by_id[e.patient_id] = &e;
    std::vector<GroundTruthEntry> test_truth;
    test_truth.reserve(test.rows());
    for (const auto& key : test.row_keys) test_truth.push_back(*by_id.at(key.patient_id));
    result.bayes_auc_test = bayes_auc(test_truth);
  }

  // Stage 6: train the selected models.
  const std::string scaler_ref = "features/train_matrix.csv.json";
  bool want_lasso = cfg.models != ModelChoice::Ann;
  bool want_ann = cfg.models != ModelChoice::Lasso;
  std::optional<LinearModel> lasso_model;
  std::optional<MlpModel> ann_model;
  if (want_lasso) {
    LassoConfig lasso_cfg = cfg.lasso;
    lasso_cfg.seed = cfg.seed;
    lasso_model = fit_lasso(train, lasso_cfg);
    writer.write("models/model_lasso.json", linear_model_to_json(*lasso_model, scaler_ref));
  }
  if (want_ann) {
    MlpConfig mlp_cfg = cfg.mlp;
    mlp_cfg.seed = cfg.seed;
    ann_model = train_mlp(train, mlp_cfg);
    writer.write("models/model_ann.json", mlp_to_json(*ann_model, scaler_ref));
  }
  writer.commit();

  // Stage 7: evaluate on the untouched test split.
  std::vector<std::string> test_ids;
  test_ids.reserve(test.rows());
  for (const auto& key : test.row_keys) test_ids.push_back(key.patient_id);
  auto evaluate_model = [&](const std::string& name, const std::vector<double>& scores) {
    EvalReport rep = evaluate(scores, test.labels, test_ids, name);
    writer.write("eval/eval_" + name + ".json", eval_to_json(rep));
    writer.write("eval/roc_" + name + ".csv", roc_curve_csv(rep.roc_curve));
    writer.write("eval/pr_" + name + ".csv", pr_curve_csv(rep.pr_curve));
    result.evals[name] = rep;
  };
  if (lasso_model) evaluate_model("lasso", predict_proba(*lasso_model, test));
  if (ann_model) evaluate_model("ann", predict_proba(*ann_model, test));
  writer.commit();

  // Stage 8: provider alert report from the deployed-model side (lasso when
  // trained, else the network), plus the side-by-side comparison.
  ModelHandle handle = lasso_model ? ModelHandle::from_linear(*lasso_model)
                                   : ModelHandle::from_mlp(*ann_model);
  AlertReport alert = build_alert_report(handle, test, generated_at);
  writer.write("report/alert_report.json", alert_report_to_json(alert));
  if (lasso_model && ann_model) {
    writer.write("report/comparison.txt",
                 compare_reports(result.evals.at("lasso"), result.evals.at("ann")));
  }

  // Run summary: the numbers a reviewer wants without opening every file.
  {
    nlohmann::json j;
    j["funnel"] = {{"input", result.funnel.input},
                   {"failed_age", result.funnel.failed_age},
                   {"failed_cste", result.funnel.failed_cste},
                   {"failed_enrollment", result.funnel.failed_enrollment},
                   {"eligible", result.funnel.eligible}};
    j["rows"] = result.rows;
    j["train_rows"] = result.train_rows;
    j["test_rows"] = result.test_rows;
    j["prevalence"] = format_fixed(result.prevalence);
    if (result.bayes_auc_all) j["bayes_auc_all"] = format_fixed(*result.bayes_auc_all);
    if (result.bayes_auc_test) j["bayes_auc_test"] = format_fixed(*result.bayes_auc_test);
    for (const auto& [name, rep] : result.evals) {
      j["models"][name] = {{"roc_auc", format_fixed(rep.roc_auc)},
                           {"pr_auc", format_fixed(rep.pr_auc)},
                           {"recall", format_fixed(rep.recall)},
                           {"precision", format_fixed(rep.precision)},
                           {"f1", format_fixed(rep.f1)}};
    }
    writer.write("run_summary.json", j.dump(2) + "\n");
  }
  writer.commit();

  writer.write_manifest(sha256_hex(canonical_config(cfg)), cfg.seed);
  result.manifest_path = writer.abs_path("manifest.json");
  return result;
}

}  // namespace asthmarisk
