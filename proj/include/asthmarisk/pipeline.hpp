#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asthmarisk/cohort.hpp"
#include "asthmarisk/extract.hpp"
#include "asthmarisk/features.hpp"
#include "asthmarisk/lasso.hpp"
#include "asthmarisk/metrics.hpp"
#include "asthmarisk/mlp.hpp"
#include "asthmarisk/synth.hpp"

namespace asthmarisk {

enum class ModelChoice { Lasso, Ann, Both };
const std::string& to_string(ModelChoice m);
std::optional<ModelChoice> model_choice_from_string(const std::string& s);

// Everything a run needs; no wall-clock defaults anywhere, so (config, seed)
// fully determine the artifact bytes.
struct RunConfig {
  std::string mode = "synth";  // synth | ingest
  SynthConfig synth;
  ExtractPaths inputs;        // ingest mode
  std::string code_map_path;  // empty = built-in defaults

  std::optional<Date> prediction_date;  // default: synth.prediction_date
  LabelScope label_scope = LabelScope::EdOrInpatient;
  ModelChoice models = ModelChoice::Both;
  Resampling resampling = Resampling::None;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  std::string outdir = "run";

  MlpConfig mlp;
  LassoConfig lasso;
  AgeBounds age;
  EnrollmentRule enrollment;

  // Alert report stamp; defaults to the prediction date rather than the
  // wall clock so reruns stay byte-identical.
  std::string generated_at;

  Date effective_prediction_date() const {
    return prediction_date ? *prediction_date : synth.prediction_date;
  }
  PredictionContext context() const { return {effective_prediction_date()}; }
};

// "key = value" lines; '#' starts a comment. Unknown keys are errors.
std::map<std::string, std::string> parse_config_file(const std::string& path);
void apply_config(const std::map<std::string, std::string>& kv, RunConfig& cfg);

// Canonical "key = value" dump (outdir excluded) used for the manifest's
// config hash; two runs differing only in output location hash identically.
std::string canonical_config(const RunConfig& cfg);

// Routes artifact bytes to <outdir>/<relpath>. Files land as .partial and
// are renamed on commit(), so a failed stage leaves its outputs clearly
// marked. Every committed file is recorded for the manifest.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::string outdir);

  void write(const std::string& relpath, const std::string& content);
  void commit();

  struct Entry {
    std::string path;  // relative to outdir
    std::string sha256;
    std::size_t bytes = 0;
  };
  const std::vector<Entry>& committed() const { return committed_; }
  std::string abs_path(const std::string& relpath) const;

  // manifest.json is written directly (it cannot list its own hash).
  void write_manifest(const std::string& config_hash, std::uint64_t seed) const;

 private:
  std::string outdir_;
  std::vector<Entry> committed_;
  std::vector<Entry> pending_;
};

struct PipelineResult {
  FunnelSummary funnel;
  std::size_t rows = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  double prevalence = 0.0;
  std::map<std::string, EvalReport> evals;  // keyed "lasso" / "ann"
  // Synth mode only: true-probability AUC ceilings.
  std::optional<double> bayes_auc_all;
  std::optional<double> bayes_auc_test;
  std::string manifest_path;
};

// synth/ingest -> timelines -> cohort -> features -> split/scale -> train ->
// evaluate -> alert report (+ comparison when both models run). Writes the
// manifest last.
PipelineResult run_pipeline(const RunConfig& cfg);

}  // namespace asthmarisk
