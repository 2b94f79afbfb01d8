#include "asthmarisk/metrics.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace asthmarisk {

namespace {

void check_sizes(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::runtime_error("scores and labels differ in length");
  }
  if (scores.empty()) throw std::runtime_error("empty score vector");
}

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts count_classes(const std::vector<int>& labels) {
  ClassCounts c;
  for (int l : labels) (l ? c.pos : c.neg)++;
  return c;
}

// Indices sorted by descending score; groups of equal scores are contiguous.
std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_sizes(scores, labels);
  ClassCounts c = count_classes(labels);
  if (c.pos == 0 || c.neg == 0) {
    throw std::runtime_error("roc_auc undefined: only one class present");
  }

  // Ascending order; average rank within each tie group.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  double np = static_cast<double>(c.pos), nn = static_cast<double>(c.neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                 const std::vector<int>& labels) {
  check_sizes(scores, labels);
  ClassCounts c = count_classes(labels);
  if (c.pos == 0 || c.neg == 0) {
    throw std::runtime_error("roc curve undefined: only one class present");
  }
  std::vector<std::size_t> order = descending_order(scores);

  std::vector<RocPoint> points;
  points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) ++tp;
      else ++fp;
    }
    points.push_back({static_cast<double>(fp) / c.neg, static_cast<double>(tp) / c.pos});
    i = j;
  }
  return points;
}

double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_sizes(scores, labels);
  ClassCounts c = count_classes(labels);
  if (c.pos == 0) throw std::runtime_error("pr_auc undefined: no positives");

  std::vector<std::size_t> order = descending_order(scores);
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, seen = 0, i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) ++tp;
    }
    seen += j - i;
    double recall = static_cast<double>(tp) / c.pos;
    double precision = static_cast<double>(tp) / seen;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

std::vector<PrPoint> pr_points(const std::vector<double>& scores,
                               const std::vector<int>& labels) {
  check_sizes(scores, labels);
  ClassCounts c = count_classes(labels);
  if (c.pos == 0) throw std::runtime_error("pr curve undefined: no positives");

  std::vector<std::size_t> order = descending_order(scores);
  std::vector<PrPoint> points;
  points.push_back({0.0, 1.0});
  std::size_t tp = 0, seen = 0, i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) ++tp;
    }
    seen += j - i;
    points.push_back({static_cast<double>(tp) / c.pos, static_cast<double>(tp) / seen});
    i = j;
  }
  return points;
}

double f1_score(double precision, double recall) {
  double denom = precision + recall;
  if (denom <= 0.0) return 0.0;
  return 2.0 * precision * recall / denom;
}

const std::string& to_string(Tier t) {
  static const std::array<std::string, 3> names = {"High", "Medium", "Low"};
  return names[static_cast<int>(t)];
}

std::vector<TierAssignment> assign_tiers(const std::vector<ScoredPatient>& scored) {
  if (scored.empty()) throw std::runtime_error("assign_tiers: empty input");
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scored[a].score != scored[b].score) return scored[a].score > scored[b].score;
    return scored[a].patient_id < scored[b].patient_id;
  });

  // ceil(0.10 n) and ceil(0.20 n), kept in integer arithmetic.
  std::size_t n = scored.size();
  std::size_t high_n = (n + 9) / 10;
  std::size_t med_upper = (n + 4) / 5;

  std::vector<TierAssignment> out;
  out.reserve(scored.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    const ScoredPatient& p = scored[order[r]];
    Tier tier = r < high_n ? Tier::High : (r < med_upper ? Tier::Medium : Tier::Low);
    out.push_back({p.patient_id, p.score, tier, r + 1});
  }
  return out;
}

std::string row_key_digest(const std::vector<std::string>& ids) {
  // FNV-1a over the joined keys; only has to detect mismatched test sets.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](char c) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  };
  for (const auto& id : ids) {
    for (char c : id) mix(c);
    mix('\n');
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EvalReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels,
                    const std::vector<std::string>& ids, const std::string& model_name) {
  check_sizes(scores, labels);
  std::vector<std::string> keys = ids;
  if (keys.empty()) {
    keys.reserve(scores.size());
    char buf[24];
    for (std::size_t i = 0; i < scores.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "row%09zu", i);
      keys.emplace_back(buf);
    }
  } else if (keys.size() != scores.size()) {
    throw std::runtime_error("ids and scores differ in length");
  }

  std::vector<ScoredPatient> scored;
  scored.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scored.push_back({keys[i], scores[i]});
  std::vector<TierAssignment> tiers = assign_tiers(scored);

  // Map id -> label for the confusion sweep. ids must be unique per row.
  std::map<std::string, int> label_by_id;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!label_by_id.emplace(keys[i], labels[i]).second) {
      throw std::runtime_error("duplicate row key in evaluate: " + keys[i]);
    }
  }

  EvalReport rep;
  rep.model_name = model_name;
  rep.n = scores.size();
  for (const auto& t : tiers) {
    bool predicted = t.tier == Tier::High;
    bool actual = label_by_id.at(t.patient_id) != 0;
    if (predicted && actual) rep.confusion.tp++;
    else if (predicted && !actual) rep.confusion.fp++;
    else if (!predicted && actual) rep.confusion.fn++;
    else rep.confusion.tn++;
  }

  ClassCounts c = count_classes(labels);
  rep.prevalence = static_cast<double>(c.pos) / static_cast<double>(rep.n);
  rep.recall = c.pos ? static_cast<double>(rep.confusion.tp) / (rep.confusion.tp + rep.confusion.fn)
                     : 0.0;
  std::size_t predicted_pos = rep.confusion.tp + rep.confusion.fp;
  rep.precision = predicted_pos ? static_cast<double>(rep.confusion.tp) / predicted_pos : 0.0;
  rep.f1 = f1_score(rep.precision, rep.recall);
  rep.roc_auc = roc_auc(scores, labels);
  rep.pr_auc = pr_auc(scores, labels);
  rep.roc_curve = roc_points(scores, labels);
  rep.pr_curve = pr_points(scores, labels);
  rep.row_key_digest = asthmarisk::row_key_digest(keys);
  return rep;
}

std::string eval_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["model"] = report.model_name;
  j["n"] = report.n;
  j["prevalence"] = report.prevalence;
  j["roc_auc"] = report.roc_auc;
  j["pr_auc"] = report.pr_auc;
  j["recall"] = report.recall;
  j["precision"] = report.precision;
  j["f1"] = report.f1;
  j["confusion"] = {{"tp", report.confusion.tp},
                    {"fp", report.confusion.fp},
                    {"tn", report.confusion.tn},
                    {"fn", report.confusion.fn}};
  j["row_key_digest"] = report.row_key_digest;
  return j.dump(2) + "\n";
}

void write_eval_json(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write eval report: " + path);
  out << eval_to_json(report);
}

EvalReport read_eval_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open eval report: " + path);
  nlohmann::json j;
  in >> j;
  for (const char* key : {"model", "n", "prevalence", "roc_auc", "pr_auc", "recall",
                          "precision", "f1", "confusion", "row_key_digest"}) {
    if (!j.contains(key)) {
      throw std::runtime_error(path + ": eval report is missing field '" + key + "'");
    }
  }
  EvalReport rep;
  rep.model_name = j.at("model").get<std::string>();
  rep.n = j.at("n").get<std::size_t>();
  rep.prevalence = j.at("prevalence").get<double>();
  rep.roc_auc = j.at("roc_auc").get<double>();
  rep.pr_auc = j.at("pr_auc").get<double>();
  rep.recall = j.at("recall").get<double>();
  rep.precision = j.at("precision").get<double>();
  rep.f1 = j.at("f1").get<double>();
  rep.confusion.tp = j.at("confusion").at("tp").get<std::size_t>();
  rep.confusion.fp = j.at("confusion").at("fp").get<std::size_t>();
  rep.confusion.tn = j.at("confusion").at("tn").get<std::size_t>();
  rep.confusion.fn = j.at("confusion").at("fn").get<std::size_t>();
  rep.row_key_digest = j.at("row_key_digest").get<std::string>();
  return rep;
}

std::string roc_curve_csv(const std::vector<RocPoint>& points) {
  std::string s = "fpr,tpr\n";
  for (const auto& p : points) s += format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
  return s;
}

std::string pr_curve_csv(const std::vector<PrPoint>& points) {
  std::string s = "recall,precision\n";
  for (const auto& p : points) {
    s += format_double(p.recall) + "," + format_double(p.precision) + "\n";
  }
  return s;
}

}  // namespace asthmarisk
