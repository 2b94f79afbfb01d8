#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "asthmarisk/hash.hpp"
#include "asthmarisk/pipeline.hpp"
#include "asthmarisk/report.hpp"

using namespace asthmarisk;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

RunConfig small_run(const std::string& outdir, std::uint64_t seed) {
  RunConfig cfg;
  cfg.synth.n_patients = 1500;
  cfg.seed = seed;
  cfg.outdir = outdir;
  cfg.mlp.epochs = 5;  // keep the unit suite quick
  return cfg;
}

FeatureMatrix tiny_scaled_matrix(std::size_t n) {
  FeatureMatrix m;
  for (const char* name : {"a", "b"}) {
    FeatureSpec s;
    s.name = name;
    m.columns.push_back(s);
  }
  for (std::size_t i = 0; i < n; ++i) {
    m.row_keys.push_back({"p" + std::to_string(1000 + i), Date::from_ymd(2013, 7, 1)});
    m.values.insert(m.values.end(),
                    {static_cast<double>(i) / n - 0.5, 0.5 - static_cast<double>(i) / n});
    m.labels.push_back(i % 7 == 0 ? 1 : 0);
  }
  return m;
}

}  // namespace

TEST_CASE("config file parsing: values, comments, unknown keys") {
  fs::path path = fs::temp_directory_path() / "cfg_test.conf";
  {
    std::ofstream out(path);
    out << "# run setup\n"
        << "n_patients = 1234\n"
        << "models = lasso   # only the baseline\n"
        << "resampling = oversample\n"
        << "prediction_date = 2013-07-01\n"
        << "\n"
        << "dropout_rate = 0.25\n";
  }
  RunConfig cfg;
  apply_config(parse_config_file(path.string()), cfg);
  CHECK(cfg.synth.n_patients == 1234);
  CHECK(cfg.models == ModelChoice::Lasso);
  CHECK(cfg.resampling == Resampling::Oversample);
  CHECK(cfg.mlp.dropout_rate == doctest::Approx(0.25));
  CHECK(cfg.effective_prediction_date().to_iso() == "2013-07-01");

  {
    std::ofstream out(path);
    out << "no_such_key = 1\n";
  }
  RunConfig cfg2;
  CHECK_THROWS_WITH_AS(apply_config(parse_config_file(path.string()), cfg2),
                       doctest::Contains("unknown key"), std::runtime_error);

  {
    std::ofstream out(path);
    out << "models = perceptron\n";
  }
  RunConfig cfg3;
  CHECK_THROWS_AS(apply_config(parse_config_file(path.string()), cfg3), std::runtime_error);
}

TEST_CASE("canonical config excludes the output directory") {
  RunConfig a;
  a.outdir = "/tmp/run_a";
  RunConfig b;
  b.outdir = "/somewhere/else";
  CHECK(canonical_config(a) == canonical_config(b));
  b.seed = 99;
  CHECK(canonical_config(a) != canonical_config(b));
}

TEST_CASE("pipeline produces a complete, manifest-covered artifact tree") {
  fs::path dir = fresh_dir("pipe_run_a");
  PipelineResult result = run_pipeline(small_run(dir.string(), 7));

  CHECK(result.funnel.input == 1500);
  CHECK(result.rows == result.funnel.eligible);
  CHECK(result.train_rows + result.test_rows == result.rows);
  CHECK(result.evals.count("lasso") == 1);
  CHECK(result.evals.count("ann") == 1);
  REQUIRE(result.bayes_auc_all.has_value());
  REQUIRE(result.bayes_auc_test.has_value());

  // Every file in the tree except the manifest itself is listed with a
  // matching content hash.
  nlohmann::json manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  std::map<std::string, std::string> listed;
  for (const auto& e : manifest.at("artifacts")) {
    listed[e.at("path").get<std::string>()] = e.at("sha256").get<std::string>();
  }
  std::set<std::string> on_disk;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string rel = fs::relative(entry.path(), dir).string();
    if (rel == "manifest.json") continue;
    on_disk.insert(rel);
    REQUIRE_MESSAGE(listed.count(rel) == 1, "unlisted artifact: " << rel);
    CHECK(listed.at(rel) == sha256_hex(slurp(entry.path())));
  }
  CHECK(on_disk.size() == listed.size());
  for (const char* expected :
       {"extract/patients.csv", "extract/ground_truth.csv", "ingest/rejects.csv",
        "cohort/funnel.json", "cohort/decisions.csv", "features/features.csv",
        "features/train_matrix.csv", "features/test_matrix.csv", "models/model_lasso.json",
        "models/model_ann.json", "eval/eval_lasso.json", "eval/roc_ann.csv",
        "report/alert_report.json", "report/comparison.txt", "run_summary.json"}) {
    CHECK_MESSAGE(on_disk.count(expected) == 1, "missing artifact: " << expected);
  }
}

TEST_CASE("identical seed and config give a byte-identical artifact tree") {
  fs::path dir_a = fresh_dir("pipe_det_a");
  fs::path dir_b = fresh_dir("pipe_det_b");
  run_pipeline(small_run(dir_a.string(), 11));
  run_pipeline(small_run(dir_b.string(), 11));

  std::set<fs::path> rel_a;
  for (const auto& e : fs::recursive_directory_iterator(dir_a)) {
    if (e.is_regular_file()) rel_a.insert(fs::relative(e.path(), dir_a));
  }
  for (const auto& rel : rel_a) {
    CHECK_MESSAGE(slurp(dir_a / rel) == slurp(dir_b / rel), "differs: " << rel);
  }
  CHECK(slurp(dir_a / "manifest.json") == slurp(dir_b / "manifest.json"));

  fs::path dir_c = fresh_dir("pipe_det_c");
  run_pipeline(small_run(dir_c.string(), 12));
  CHECK(slurp(dir_a / "manifest.json") != slurp(dir_c / "manifest.json"));
}

TEST_CASE("model selection limits the artifacts produced") {
  fs::path dir = fresh_dir("pipe_lasso_only");
  RunConfig cfg = small_run(dir.string(), 13);
  cfg.models = ModelChoice::Lasso;
  PipelineResult result = run_pipeline(cfg);
  CHECK(result.evals.count("lasso") == 1);
  CHECK(result.evals.count("ann") == 0);
  CHECK(fs::exists(dir / "models/model_lasso.json"));
  CHECK_FALSE(fs::exists(dir / "models/model_ann.json"));
  CHECK_FALSE(fs::exists(dir / "eval/eval_ann.json"));
  CHECK_FALSE(fs::exists(dir / "report/comparison.txt"));  // nothing to compare
}

TEST_CASE("ingest mode with a missing input names the path") {
  RunConfig cfg;
  cfg.mode = "ingest";
  cfg.inputs = {"/nonexistent/patients.csv", "/nonexistent/claims.csv",
                "/nonexistent/fills.csv", "/nonexistent/enrollment.csv"};
  cfg.prediction_date = Date::from_ymd(2013, 7, 1);
  cfg.outdir = fresh_dir("pipe_missing").string();
  cfg.seed = 3;
  CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("/nonexistent/patients.csv"),
                       std::runtime_error);
}

TEST_CASE("alert report: High tier only, sorted, ceil(0.1 n) rows") {
  FeatureMatrix m = tiny_scaled_matrix(100);
  LinearModel linear;
  linear.weights = {1.5, -0.5};
  linear.intercept = -2.0;
  linear.feature_names = {"a", "b"};
  ModelHandle handle = ModelHandle::from_linear(linear);

  AlertReport report = build_alert_report(handle, m, "2013-07-01");
  CHECK(report.generated_at == "2013-07-01");
  CHECK(report.prediction_date == "2013-07-01");
  CHECK(report.cohort_size == 100);
  REQUIRE(report.rows.size() == 10);
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    CHECK(report.rows[i - 1].score >= report.rows[i].score);
    CHECK(report.rows[i].rank == i + 1);
  }
  for (const auto& row : report.rows) {
    CHECK(row.top_features.size() == 2);  // capped by feature count
  }
}

TEST_CASE("zero-weight model: scores 0.5, tie-rule tiers, zero contributions") {
  FeatureMatrix m = tiny_scaled_matrix(20);
  LinearModel flat;
  flat.weights = {0.0, 0.0};
  flat.intercept = 0.0;
  flat.feature_names = {"a", "b"};
  AlertReport report = build_alert_report(ModelHandle::from_linear(flat), m, "2013-07-01");
  REQUIRE(report.rows.size() == 2);  // ceil(0.1 * 20)
  CHECK(report.rows[0].patient_id == "p1000");  // ties resolved by id
  CHECK(report.rows[1].patient_id == "p1001");
  for (const auto& row : report.rows) {
    CHECK(row.score == doctest::Approx(0.5));
    for (const auto& [name, value] : row.top_features) CHECK(value == 0.0);
  }
}

TEST_CASE("schema mismatch between model and matrix is spelled out") {
  FeatureMatrix m = tiny_scaled_matrix(10);
  LinearModel other;
  other.weights = {0.1, 0.2};
  other.feature_names = {"a", "zz"};
  CHECK_THROWS_WITH_AS(ModelHandle::from_linear(other).score(m), doctest::Contains("zz"),
                       std::runtime_error);
}

TEST_CASE("compare: table shape, zero deltas, digest mismatch") {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::string> ids;
  for (int i = 0; i < 60; ++i) {
    scores.push_back(1.0 - i * 0.01);
    labels.push_back(i % 9 == 0 ? 1 : 0);
    ids.push_back("p" + std::to_string(i));
  }
  EvalReport a = evaluate(scores, labels, ids, "lasso");
  EvalReport b = a;
  b.model_name = "ann";
  std::string table = compare_reports(a, b);
  CHECK(table.find("Models") != std::string::npos);
  CHECK(table.find("ROC AUC") != std::string::npos);
  CHECK(table.find("lasso") != std::string::npos);
  CHECK(table.find("ann") != std::string::npos);
  CHECK(table.find("delta (b - a)") != std::string::npos);
  CHECK(table.find("0.000") != std::string::npos);

  EvalReport c = a;
  c.row_key_digest = "deadbeefdeadbeef";
  CHECK_THROWS_WITH_AS(compare_reports(a, c), doctest::Contains("different test rows"),
                       std::runtime_error);
}

TEST_CASE("artifact writer: .partial until commit, hashes recorded") {
  fs::path dir = fresh_dir("writer_partial");
  ArtifactWriter writer(dir.string());
  writer.write("stage/file.txt", "hello\n");
  CHECK(fs::exists(dir / "stage/file.txt.partial"));
  CHECK_FALSE(fs::exists(dir / "stage/file.txt"));
  writer.commit();
  CHECK_FALSE(fs::exists(dir / "stage/file.txt.partial"));
  CHECK(fs::exists(dir / "stage/file.txt"));
  REQUIRE(writer.committed().size() == 1);
  CHECK(writer.committed()[0].path == "stage/file.txt");
  CHECK(writer.committed()[0].sha256 == sha256_hex("hello\n"));
  CHECK(writer.committed()[0].bytes == 6);

  // An abandoned write (stage failure) leaves its .partial in place.
  writer.write("stage/bad.txt", "half-done");
  CHECK(fs::exists(dir / "stage/bad.txt.partial"));
}

TEST_CASE("comparison table renders the published fixture values") {
  EvalReport lasso;
  lasso.model_name = "lasso";
  lasso.roc_auc = 0.842;
  lasso.recall = 0.565;
  lasso.precision = 0.123;
  lasso.f1 = 0.202;
  lasso.pr_auc = 0.170;
  lasso.row_key_digest = "same";
  EvalReport ann = lasso;
  ann.model_name = "ann";
  ann.roc_auc = 0.845;
  ann.recall = 0.510;
  ann.f1 = 0.198;
  ann.pr_auc = 0.174;

  std::string table = compare_reports(lasso, ann);
  for (const char* cell : {"0.842", "0.565", "0.123", "0.202", "0.170",
                           "0.845", "0.510", "0.198", "0.174"}) {
    CHECK_MESSAGE(table.find(cell) != std::string::npos, "missing cell " << cell);
  }
  // Three data lines under the header: one per model plus the delta row.
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);
}

TEST_CASE("ingest mode runs the full pipeline from files on disk") {
  // Generate a small extract, then consume it through the ingest route.
  fs::path extract_dir = fresh_dir("pipe_ingest_extract");
  SynthConfig synth_cfg;
  synth_cfg.n_patients = 1200;
  synth_cfg.seed = 19;
  ExtractPaths paths = write_synth_files(generate(synth_cfg), extract_dir.string());

  RunConfig cfg;
  cfg.mode = "ingest";
  cfg.inputs = paths;
  cfg.prediction_date = synth_cfg.prediction_date;
  cfg.seed = 19;
  cfg.outdir = fresh_dir("pipe_ingest_run").string();
  cfg.mlp.epochs = 5;
  PipelineResult result = run_pipeline(cfg);
  CHECK(result.funnel.input == 1200);
  CHECK(result.evals.count("lasso") == 1);
  CHECK(result.evals.count("ann") == 1);
  CHECK_FALSE(result.bayes_auc_test.has_value());  // no ground truth in ingest mode
  CHECK_FALSE(fs::exists(fs::path(cfg.outdir) / "extract"));
}

TEST_CASE("run summary carries the headline numbers") {
  fs::path dir = fresh_dir("pipe_summary");
  PipelineResult result = run_pipeline(small_run(dir.string(), 17));
  nlohmann::json j = nlohmann::json::parse(slurp(dir / "run_summary.json"));
  CHECK(j.at("rows").get<std::size_t>() == result.rows);
  CHECK(j.at("funnel").at("eligible").get<std::size_t>() == result.funnel.eligible);
  CHECK(j.contains("bayes_auc_test"));
  CHECK(j.at("models").contains("lasso"));
  CHECK(j.at("models").contains("ann"));
}
