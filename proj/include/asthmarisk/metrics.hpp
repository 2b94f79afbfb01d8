#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace asthmarisk {

// ROC AUC via the rank (Mann-Whitney) method with average ranks on ties:
// P(score_pos > score_neg) + P(tie)/2. Throws when only one class is present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};
// Curve points swept over descending score groups (ties collapse into one
// threshold); starts at (0,0), ends at (1,1). Trapezoidal integration of
// these points equals roc_auc to rounding error.
std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                 const std::vector<int>& labels);

struct PrPoint {
  double recall = 0.0;
  double precision = 1.0;
};
// Average-precision (step) form: sum of precision * delta-recall over
// descending score groups. Trapezoids over PR curves are biased, so not used.
double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels);
std::vector<PrPoint> pr_points(const std::vector<double>& scores,
                               const std::vector<int>& labels);

// Harmonic mean; defined 0 when precision + recall == 0 to keep reports total.
double f1_score(double precision, double recall);

enum class Tier { High, Medium, Low };
const std::string& to_string(Tier t);

struct TierAssignment {
  std::string patient_id;
  double score = 0.0;
  Tier tier = Tier::Low;
  std::size_t rank = 0;  // 1-based, by (score desc, patient_id asc)
};

struct ScoredPatient {
  std::string patient_id;
  double score = 0.0;
};

// Top ceil(0.10 n) ranks are High, the next ceil(0.20 n) - ceil(0.10 n)
// Medium, the rest Low. Tier sizes depend only on n. Returned in rank order.
std::vector<TierAssignment> assign_tiers(const std::vector<ScoredPatient>& scored);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct EvalReport {
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double prevalence = 0.0;
  Confusion confusion;
  std::size_t n = 0;
  std::vector<RocPoint> roc_curve;
  std::vector<PrPoint> pr_curve;
  std::string model_name;
  std::string row_key_digest;  // detects evaluations over different test rows
};

// Predicted-positive = the High tier. ids may be empty, in which case
// zero-padded row indices stand in (they only matter for tie-breaking).
EvalReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels,
                    const std::vector<std::string>& ids = {},
                    const std::string& model_name = "");

std::string row_key_digest(const std::vector<std::string>& ids);

void write_eval_json(const std::string& path, const EvalReport& report);
EvalReport read_eval_json(const std::string& path);  // validates schema completeness
std::string eval_to_json(const EvalReport& report);

std::string roc_curve_csv(const std::vector<RocPoint>& points);
std::string pr_curve_csv(const std::vector<PrPoint>& points);

}  // namespace asthmarisk
