#include "asthmarisk/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace asthmarisk {

ModelHandle ModelHandle::from_linear(LinearModel model) {
  ModelHandle h;
  h.kind_ = "lasso";
  h.linear_ = std::move(model);
  return h;
}

ModelHandle ModelHandle::from_mlp(MlpModel model) {
  ModelHandle h;
  h.kind_ = "ann";
  h.mlp_ = std::move(model);
  return h;
}

ModelHandle ModelHandle::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model: " + path);
  nlohmann::json j;
  in >> j;
  std::string kind = j.value("kind", "");
  if (kind == "lasso_logistic") return from_linear(load_linear_model_json(path));
  if (kind == "mlp") return from_mlp(load_mlp_json(path));
  throw std::runtime_error(path + ": unknown model kind '" + kind + "'");
}

const std::vector<std::string>& ModelHandle::feature_names() const {
  return kind_ == "lasso" ? linear_.feature_names : mlp_.feature_names;
}

void ModelHandle::check_schema(const FeatureMatrix& matrix) const {
  std::vector<std::string> matrix_names = matrix.feature_names();
  const std::vector<std::string>& model_names = feature_names();
  if (matrix_names == model_names) return;
  std::string msg = "model/matrix feature mismatch;";
  for (const auto& n : model_names) {
    if (std::find(matrix_names.begin(), matrix_names.end(), n) == matrix_names.end()) {
      msg += " model-only: " + n;
    }
  }
  for (const auto& n : matrix_names) {
    if (std::find(model_names.begin(), model_names.end(), n) == model_names.end()) {
      msg += " matrix-only: " + n;
    }
  }
  if (matrix_names.size() == model_names.size() &&
      msg == "model/matrix feature mismatch;") {
    msg += " same names, different order";
  }
  throw std::runtime_error(msg);
}

std::vector<double> ModelHandle::score(const FeatureMatrix& matrix) const {
  check_schema(matrix);
  return kind_ == "lasso" ? predict_proba(linear_, matrix) : predict_proba(mlp_, matrix);
}

std::vector<std::pair<std::string, double>> ModelHandle::top_contributions(
    const FeatureMatrix& matrix, std::size_t row, std::size_t k) const {
  const double* x = matrix.row(row);
  std::size_t d = matrix.cols();
  std::vector<double> value(d);
  if (kind_ == "lasso") {
    for (std::size_t j = 0; j < d; ++j) value[j] = linear_.weights[j] * x[j];
  } else {
    value = input_gradient(mlp_, std::span<const double>(x, d));
  }
  std::vector<std::size_t> order(d);
  for (std::size_t j = 0; j < d; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(value[a]) > std::abs(value[b]);
  });
  std::vector<std::pair<std::string, double>> top;
  for (std::size_t j = 0; j < std::min(k, d); ++j) {
    top.emplace_back(matrix.columns[order[j]].name, value[order[j]]);
  }
  return top;
}

AlertReport build_alert_report(const ModelHandle& model, const FeatureMatrix& matrix,
                               const std::string& generated_at) {
  if (matrix.rows() == 0) throw std::runtime_error("alert report: empty matrix");
  std::vector<double> scores = model.score(matrix);

  std::vector<ScoredPatient> scored;
  scored.reserve(scores.size());
  std::map<std::string, std::size_t> row_by_id;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    scored.push_back({matrix.row_keys[r].patient_id, scores[r]});
    row_by_id[matrix.row_keys[r].patient_id] = r;
  }
  std::vector<TierAssignment> tiers = assign_tiers(scored);

  AlertReport report;
  report.generated_at = generated_at;
  report.prediction_date = matrix.row_keys.front().prediction_date.to_iso();
  report.model_name = model.kind();
  report.cohort_size = matrix.rows();
  for (const auto& t : tiers) {
    if (t.tier != Tier::High) break;  // tiers come back in rank order
    AlertRow row;
    row.patient_id = t.patient_id;
    row.score = t.score;
    row.tier = t.tier;
    row.rank = t.rank;
    row.top_features = model.top_contributions(matrix, row_by_id.at(t.patient_id));
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string alert_report_to_json(const AlertReport& report) {
  nlohmann::json j;
  j["generated_at"] = report.generated_at;
  j["prediction_date"] = report.prediction_date;
  j["model"] = report.model_name;
  j["cohort_size"] = report.cohort_size;
  j["tier"] = "High";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& [name, value] : r.top_features) {
      features.push_back({{"name", name}, {"value", value}});
    }
    rows.push_back({{"patient_id", r.patient_id},
                    {"score", r.score},
                    {"tier", to_string(r.tier)},
                    {"rank", r.rank},
                    {"top_features", features}});
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

void write_alert_report(const std::string& path, const AlertReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write alert report: " + path);
  out << alert_report_to_json(report);
}

std::string compare_reports(const EvalReport& a, const EvalReport& b) {
  if (a.row_key_digest != b.row_key_digest) {
    throw std::runtime_error("cannot compare: reports cover different test rows (digest " +
                             a.row_key_digest + " vs " + b.row_key_digest + ")");
  }
  auto line = [](const std::string& name, double auc, double rec, double prec, double f1,
                 double pr) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-24s %8.3f %8.3f %10.3f %8.3f %8.3f\n", name.c_str(), auc,
                  rec, prec, f1, pr);
    return std::string(buf);
  };
  std::string out;
  char head[160];
  std::snprintf(head, sizeof(head), "%-24s %8s %8s %10s %8s %8s\n", "Models", "ROC AUC", "Recall",
                "Precision", "F1", "PR AUC");
  out += head;
  out += line(a.model_name.empty() ? "model_a" : a.model_name, a.roc_auc, a.recall, a.precision,
              a.f1, a.pr_auc);
  out += line(b.model_name.empty() ? "model_b" : b.model_name, b.roc_auc, b.recall, b.precision,
              b.f1, b.pr_auc);
  out += line("delta (b - a)", b.roc_auc - a.roc_auc, b.recall - a.recall,
              b.precision - a.precision, b.f1 - a.f1, b.pr_auc - a.pr_auc);
  return out;
}

}  // namespace asthmarisk
