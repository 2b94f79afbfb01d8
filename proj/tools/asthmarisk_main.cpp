// Command-line front end for the claims risk pipeline. Subcommands mirror
// the pipeline stages so each piece can run (and be inspected) on its own;
// `pipeline` chains them end to end and writes a manifest.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asthmarisk/cohort.hpp"
#include "asthmarisk/extract.hpp"
#include "asthmarisk/features.hpp"
#include "asthmarisk/pipeline.hpp"
#include "asthmarisk/report.hpp"
#include "asthmarisk/synth.hpp"

namespace fs = std::filesystem;
using namespace asthmarisk;

namespace {

Date require_date(const std::string& flag, const std::string& value) {
  auto d = Date::parse_iso(value);
  if (!d) throw CLI::ValidationError(flag, "expected an ISO date (YYYY-MM-DD)");
  return *d;
}

void write_file(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

ExtractPaths extract_paths_in(const std::string& dir) {
  return {dir + "/patients.csv", dir + "/claims.csv", dir + "/fills.csv",
          dir + "/enrollment.csv"};
}

ExtractSchema schema_from(const std::string& code_map_path) {
  ExtractSchema schema;
  if (!code_map_path.empty()) schema.code_map = CodeMap::load_json(code_map_path);
  return schema;
}

std::map<std::string, PatientTimeline> load_timelines(const std::string& dir,
                                                      const std::string& code_map_path) {
  ParsedExtract parsed = parse_extract(extract_paths_in(dir), schema_from(code_map_path));
  TimelineBuild build = build_timelines(parsed);
  std::size_t rejects = parsed.rejects.size() + build.rejects.size();
  if (rejects > 0) {
    std::cerr << "note: " << rejects << " rejected rows during ingestion\n";
  }
  return std::move(build.timelines);
}

// Config keys exposed 1:1 as --key flags on the pipeline subcommand.
const std::vector<std::string> kConfigKeys = {
    "mode",          "n_patients",     "study_start",    "study_end",
    "prediction_date", "target_prevalence", "signal_strength", "decoy_fraction",
    "patients",      "claims",         "fills",          "enrollment",
    "code_map",      "label_scope",    "models",         "resampling",
    "train_fraction", "outdir",        "hidden_sizes",   "dropout_rate",
    "learning_rate", "batch_size",     "epochs",         "leaky_alpha",
    "lasso_max_iter", "lasso_tol",     "age_min_years",  "age_max_years",
    "max_gap_days",  "generated_at"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pediatric asthma ED-visit risk: claims ingestion, cohort rules, "
               "feature extraction, model training and tiered alert reports"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth_cmd = app.add_subcommand("synth", "Generate a seeded synthetic claims extract");
  struct {
    std::string out;
    std::uint64_t seed = 0;
    std::size_t n = 28378;
    std::string study_start = "2012-07-01", study_end = "2014-06-30";
    std::string prediction_date = "2013-07-01";
    double prevalence = 0.03, signal = 1.0, decoys = 0.20;
  } synth_args;
  synth_cmd->add_option("--out", synth_args.out, "output directory")->required();
  synth_cmd->add_option("--seed", synth_args.seed, "generator seed")->required();
  synth_cmd->add_option("--n", synth_args.n, "patient count");
  synth_cmd->add_option("--study-start", synth_args.study_start, "study window start");
  synth_cmd->add_option("--study-end", synth_args.study_end, "study window end");
  synth_cmd->add_option("--prediction-date", synth_args.prediction_date, "prediction date");
  synth_cmd->add_option("--prevalence", synth_args.prevalence, "target label prevalence");
  synth_cmd->add_option("--signal", synth_args.signal, "planted signal strength");
  synth_cmd->add_option("--decoy-fraction", synth_args.decoys, "funnel-ineligible fraction");

  // ---- ingest ----
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse and validate a claims extract");
  struct {
    std::string patients, claims, fills, enrollment, code_map, out;
  } ingest_args;
  ingest_cmd->add_option("--patients", ingest_args.patients)->required();
  ingest_cmd->add_option("--claims", ingest_args.claims)->required();
  ingest_cmd->add_option("--fills", ingest_args.fills)->required();
  ingest_cmd->add_option("--enrollment", ingest_args.enrollment)->required();
  ingest_cmd->add_option("--code-map", ingest_args.code_map, "code map JSON");
  ingest_cmd->add_option("--out", ingest_args.out, "output directory")->required();

  // ---- cohort ----
  auto* cohort_cmd = app.add_subcommand("cohort", "Apply the cohort selection funnel");
  struct {
    std::string in, out, prediction_date, code_map;
    double age_min = 0.5, age_max = 18.0;
    int max_gap = 45;
  } cohort_args;
  cohort_cmd->add_option("--in", cohort_args.in, "extract directory")->required();
  cohort_cmd->add_option("--out", cohort_args.out, "output directory")->required();
  cohort_cmd->add_option("--prediction-date", cohort_args.prediction_date)->required();
  cohort_cmd->add_option("--code-map", cohort_args.code_map);
  cohort_cmd->add_option("--age-min", cohort_args.age_min, "minimum age in years");
  cohort_cmd->add_option("--age-max", cohort_args.age_max, "maximum age in years");
  cohort_cmd->add_option("--max-gap-days", cohort_args.max_gap, "enrollment gap tolerance");

  // ---- features ----
  auto* features_cmd = app.add_subcommand("features", "Extract the feature matrix and labels");
  struct {
    std::string in, out, prediction_date, code_map, label_scope = "ed_or_ip";
  } features_args;
  features_cmd->add_option("--in", features_args.in, "extract directory")->required();
  features_cmd->add_option("--out", features_args.out, "output directory")->required();
  features_cmd->add_option("--prediction-date", features_args.prediction_date)->required();
  features_cmd->add_option("--code-map", features_args.code_map);
  features_cmd->add_option("--label-scope", features_args.label_scope, "ed_only | ed_or_ip");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "Split, scale and train models");
  struct {
    std::string features, out, model = "both", resampling = "none";
    std::uint64_t seed = 0;
    double train_fraction = 0.7;
    int epochs = 100, batch_size = 32;
    double dropout = 0.5, lr = 0.01;
    std::string hidden = "32,16";
  } train_args;
  train_cmd->add_option("--features", train_args.features, "features.csv path")->required();
  train_cmd->add_option("--out", train_args.out, "output directory")->required();
  train_cmd->add_option("--model", train_args.model, "lasso | ann | both");
  train_cmd->add_option("--seed", train_args.seed, "split/training seed")->required();
  train_cmd->add_option("--resampling", train_args.resampling, "none | oversample | downsample");
  train_cmd->add_option("--train-fraction", train_args.train_fraction);
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--batch-size", train_args.batch_size);
  train_cmd->add_option("--dropout", train_args.dropout);
  train_cmd->add_option("--learning-rate", train_args.lr);
  train_cmd->add_option("--hidden-sizes", train_args.hidden, "comma-separated widths");

  // ---- evaluate ----
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a test matrix and report metrics");
  struct {
    std::string model, test, out, curves;
  } eval_args;
  eval_cmd->add_option("--model", eval_args.model, "model JSON")->required();
  eval_cmd->add_option("--test", eval_args.test, "test matrix CSV")->required();
  eval_cmd->add_option("--out", eval_args.out, "eval report JSON path")->required();
  eval_cmd->add_option("--curves-prefix", eval_args.curves,
                       "write <prefix>_roc.csv and <prefix>_pr.csv");

  // ---- report ----
  auto* report_cmd = app.add_subcommand("report", "Emit the High-tier provider alert report");
  struct {
    std::string model, matrix, out, generated_at;
  } report_args;
  report_cmd->add_option("--model", report_args.model, "model JSON")->required();
  report_cmd->add_option("--matrix", report_args.matrix, "scored matrix CSV")->required();
  report_cmd->add_option("--out", report_args.out, "alert report JSON path")->required();
  report_cmd->add_option("--generated-at", report_args.generated_at,
                         "report stamp (defaults to the prediction date)");

  // ---- compare ----
  auto* compare_cmd = app.add_subcommand("compare", "Side-by-side metric table for two runs");
  struct {
    std::string a, b, out;
  } compare_args;
  compare_cmd->add_option("--a", compare_args.a, "first eval JSON")->required();
  compare_cmd->add_option("--b", compare_args.b, "second eval JSON")->required();
  compare_cmd->add_option("--out", compare_args.out, "optional output file");

  // ---- pipeline ----
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run every stage end to end");
  std::string pipeline_config;
  std::uint64_t pipeline_seed = 0;
  std::string pipeline_out;
  pipeline_cmd->add_option("--config", pipeline_config, "key = value config file");
  pipeline_cmd->add_option("--seed", pipeline_seed, "master seed")->required();
  pipeline_cmd->add_option("--out", pipeline_out, "output directory");
  std::map<std::string, std::string> overrides;
  for (const auto& key : kConfigKeys) {
    std::string flag = "--" + key;
    for (auto& c : flag) {
      if (c == '_') c = '-';
    }
    pipeline_cmd->add_option_function<std::string>(
        flag, [&overrides, key](const std::string& v) { overrides[key] = v; },
        "config override for '" + key + "'");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      SynthConfig cfg;
      cfg.n_patients = synth_args.n;
      cfg.study_start = require_date("--study-start", synth_args.study_start);
      cfg.study_end = require_date("--study-end", synth_args.study_end);
      cfg.prediction_date = require_date("--prediction-date", synth_args.prediction_date);
      cfg.target_prevalence = synth_args.prevalence;
      cfg.signal_strength = synth_args.signal;
      cfg.decoy_fraction = synth_args.decoys;
      cfg.seed = synth_args.seed;
      SynthOutput out = generate(cfg);
      write_synth_files(out, synth_args.out);
      std::printf("generated %zu patients into %s (realized prevalence %.4f)\n",
                  cfg.n_patients, synth_args.out.c_str(), out.realized_prevalence);
    } else if (*ingest_cmd) {
      ExtractPaths paths{ingest_args.patients, ingest_args.claims, ingest_args.fills,
                         ingest_args.enrollment};
      ParsedExtract parsed = parse_extract(paths, schema_from(ingest_args.code_map));
      TimelineBuild build = build_timelines(parsed);
      std::vector<Reject> rejects = parsed.rejects;
      rejects.insert(rejects.end(), build.rejects.begin(), build.rejects.end());
      fs::create_directories(ingest_args.out);
      write_reject_report(ingest_args.out + "/rejects.csv", rejects);
      write_file(ingest_args.out + "/patients.csv", serialize_patients(parsed.demographics));
      write_file(ingest_args.out + "/claims.csv", serialize_claims(parsed.claims));
      write_file(ingest_args.out + "/fills.csv", serialize_fills(parsed.fills));
      write_file(ingest_args.out + "/enrollment.csv", serialize_enrollment(parsed.spans));
      for (const auto& [file, counts] : parsed.counts) {
        std::printf("%s: %zu accepted, %zu rejected\n", file.c_str(), counts.accepted,
                    counts.rejected);
      }
      std::printf("%zu timelines, %zu orphan events\n", build.timelines.size(),
                  build.rejects.size());
    } else if (*cohort_cmd) {
      auto timelines = load_timelines(cohort_args.in, cohort_args.code_map);
      PredictionContext ctx{require_date("--prediction-date", cohort_args.prediction_date)};
      AgeBounds age{cohort_args.age_min, cohort_args.age_max};
      EnrollmentRule rule{cohort_args.max_gap};
      CohortResult result = select_cohort(timelines, ctx, age, rule);
      fs::create_directories(cohort_args.out);
      write_file(cohort_args.out + "/funnel.json", result.funnel.to_json());
      write_file(cohort_args.out + "/decisions.csv", decisions_to_csv(result.decisions));
      std::printf("%s", result.funnel.to_json().c_str());
    } else if (*features_cmd) {
      auto timelines = load_timelines(features_args.in, features_args.code_map);
      PredictionContext ctx{require_date("--prediction-date", features_args.prediction_date)};
      auto scope = label_scope_from_string(features_args.label_scope);
      if (!scope) throw std::runtime_error("unknown label scope " + features_args.label_scope);
      CohortResult cohort = select_cohort(timelines, ctx);
      std::vector<std::string> eligible;
      for (const auto& d : cohort.decisions) {
        if (d.eligible) eligible.push_back(d.patient_id);
      }
      FeatureMatrix m = extract_features(timelines, eligible, ctx, default_registry(), *scope);
      fs::create_directories(features_args.out);
      write_matrix_csv(features_args.out + "/features.csv", m, ctx, 0);
      std::printf("features: %zu rows x %zu columns, %zu positives\n", m.rows(), m.cols(),
                  m.positives());
    } else if (*train_cmd) {
      FeatureMatrix matrix = read_matrix_csv(train_args.features);
      auto resampling = resampling_from_string(train_args.resampling);
      if (!resampling) {
        throw std::runtime_error("unknown resampling " + train_args.resampling);
      }
      SplitPlan plan{train_args.seed, train_args.train_fraction, *resampling};
      Split split = split_and_resample(matrix, plan);
      Scaler scaler = fit_scaler(split.train);
      FeatureMatrix train = apply_scaler(std::move(split.train), scaler);
      FeatureMatrix test = apply_scaler(std::move(split.test), scaler);
      fs::create_directories(train_args.out);
      PredictionContext ctx{train.row_keys.empty() ? Date{} : train.row_keys[0].prediction_date};
      write_matrix_csv(train_args.out + "/train_matrix.csv", train, ctx, train_args.seed);
      write_matrix_csv(train_args.out + "/test_matrix.csv", test, ctx, train_args.seed);
      const std::string scaler_ref = "train_matrix.csv.json";
      if (train_args.model == "lasso" || train_args.model == "both") {
        LassoConfig cfg;
        cfg.seed = train_args.seed;
        LinearModel model = fit_lasso(train, cfg);
        save_linear_model_json(train_args.out + "/model_lasso.json", model, scaler_ref);
        std::printf("lasso: lambda %.6g, %zu nonzero weights\n", model.lambda,
                    static_cast<std::size_t>(std::count_if(
                        model.weights.begin(), model.weights.end(),
                        [](double w) { return w != 0.0; })));
      }
      if (train_args.model == "ann" || train_args.model == "both") {
        MlpConfig cfg;
        cfg.seed = train_args.seed;
        cfg.epochs = train_args.epochs;
        cfg.batch_size = train_args.batch_size;
        cfg.dropout_rate = train_args.dropout;
        cfg.learning_rate = train_args.lr;
        cfg.hidden_sizes.clear();
        std::stringstream ss(train_args.hidden);
        std::string tok;
        while (std::getline(ss, tok, ',')) cfg.hidden_sizes.push_back(std::stoi(tok));
        MlpModel model = train_mlp(train, cfg);
        save_mlp_json(train_args.out + "/model_ann.json", model, scaler_ref);
        std::printf("ann: %d epochs, final train loss %.6f\n", cfg.epochs,
                    model.training_log.empty() ? 0.0 : model.training_log.back());
      }
    } else if (*eval_cmd) {
      ModelHandle model = ModelHandle::load(eval_args.model);
      FeatureMatrix test = read_matrix_csv(eval_args.test);
      std::vector<std::string> ids;
      for (const auto& k : test.row_keys) ids.push_back(k.patient_id);
      EvalReport rep = evaluate(model.score(test), test.labels, ids, model.kind());
      write_eval_json(eval_args.out, rep);
      if (!eval_args.curves.empty()) {
        write_file(eval_args.curves + "_roc.csv", roc_curve_csv(rep.roc_curve));
        write_file(eval_args.curves + "_pr.csv", pr_curve_csv(rep.pr_curve));
      }
      std::printf("%s: roc_auc %.3f, pr_auc %.3f, recall %.3f, precision %.3f, f1 %.3f\n",
                  model.kind().c_str(), rep.roc_auc, rep.pr_auc, rep.recall, rep.precision,
                  rep.f1);
    } else if (*report_cmd) {
      ModelHandle model = ModelHandle::load(report_args.model);
      FeatureMatrix matrix = read_matrix_csv(report_args.matrix);
      std::string stamp = report_args.generated_at;
      if (stamp.empty() && !matrix.row_keys.empty()) {
        stamp = matrix.row_keys.front().prediction_date.to_iso();
      }
      AlertReport alert = build_alert_report(model, matrix, stamp);
      write_alert_report(report_args.out, alert);
      std::printf("alert report: %zu High-tier patients of %zu\n", alert.rows.size(),
                  alert.cohort_size);
    } else if (*compare_cmd) {
      EvalReport a = read_eval_json(compare_args.a);
      EvalReport b = read_eval_json(compare_args.b);
      std::string table = compare_reports(a, b);
      if (!compare_args.out.empty()) write_file(compare_args.out, table);
      std::printf("%s", table.c_str());
    } else if (*pipeline_cmd) {
      RunConfig cfg;
      if (!pipeline_config.empty()) apply_config(parse_config_file(pipeline_config), cfg);
      apply_config(overrides, cfg);
      cfg.seed = pipeline_seed;
      if (!pipeline_out.empty()) cfg.outdir = pipeline_out;
      PipelineResult result = run_pipeline(cfg);
      std::printf("cohort: %zu in, %zu eligible; rows %zu (train %zu / test %zu)\n",
                  result.funnel.input, result.funnel.eligible, result.rows, result.train_rows,
                  result.test_rows);
      for (const auto& [name, rep] : result.evals) {
        std::printf("%s: roc_auc %.3f, pr_auc %.3f, recall %.3f, precision %.3f, f1 %.3f\n",
                    name.c_str(), rep.roc_auc, rep.pr_auc, rep.recall, rep.precision, rep.f1);
      }
      if (result.bayes_auc_test) {
        std::printf("bayes ceiling (test rows): %.3f\n", *result.bayes_auc_test);
      }
      std::printf("manifest: %s\n", result.manifest_path.c_str());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
