#pragma once

#include <string>
#include <utility>
#include <vector>

#include "asthmarisk/features.hpp"
#include "asthmarisk/lasso.hpp"
#include "asthmarisk/metrics.hpp"
#include "asthmarisk/mlp.hpp"

namespace asthmarisk {

// Either trained model behind one scoring/explanation surface.
class ModelHandle {
 public:
  static ModelHandle from_linear(LinearModel model);
  static ModelHandle from_mlp(MlpModel model);
  // Dispatches on the file's "kind" field.
  static ModelHandle load(const std::string& path);

  const std::string& kind() const { return kind_; }
  const std::vector<std::string>& feature_names() const;

  // Throws when the matrix's feature names differ from the model's, listing
  // the offending names.
  void check_schema(const FeatureMatrix& matrix) const;

  std::vector<double> score(const FeatureMatrix& matrix) const;

  // Top-k features for one (standardized) row: the linear model ranks by
  // |weight * value| and reports weight * value; the network ranks by input
  // gradient magnitude and reports the gradient.
  std::vector<std::pair<std::string, double>> top_contributions(const FeatureMatrix& matrix,
                                                                std::size_t row,
                                                                std::size_t k = 3) const;

 private:
  std::string kind_;
  LinearModel linear_;
  MlpModel mlp_;
};

struct AlertRow {
  std::string patient_id;
  double score = 0.0;
  Tier tier = Tier::High;
  std::size_t rank = 0;
  std::vector<std::pair<std::string, double>> top_features;
};

// The monthly provider deliverable: High-tier patients only, sorted by
// descending score. generated_at is caller-supplied so reruns stay
// byte-identical.
struct AlertReport {
  std::string generated_at;
  std::string prediction_date;
  std::string model_name;
  std::size_t cohort_size = 0;
  std::vector<AlertRow> rows;
};

AlertReport build_alert_report(const ModelHandle& model, const FeatureMatrix& matrix,
                               const std::string& generated_at);

std::string alert_report_to_json(const AlertReport& report);
void write_alert_report(const std::string& path, const AlertReport& report);

// Side-by-side metric table (rows = models, columns = ROC AUC, Recall,
// Precision, F1, PR AUC) plus deltas. Throws when the two reports cover
// different test rows.
std::string compare_reports(const EvalReport& a, const EvalReport& b);

}  // namespace asthmarisk
