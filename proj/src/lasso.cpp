#include "asthmarisk/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "asthmarisk/linalg.hpp"
#include "asthmarisk/metrics.hpp"
#include "asthmarisk/rng.hpp"

namespace asthmarisk {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double bce_objective(const FeatureMatrix& data, std::span<const double> weights,
                     double intercept) {
  // softplus(z) - y*z == -[y log p + (1-y) log(1-p)]; stable for any z.
  double sum = 0.0;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    double z = dot(data.row(r), weights.data(), weights.size()) + intercept;
    sum += softplus(z) - data.labels[r] * z;
  }
  return sum / static_cast<double>(data.rows());
}

std::vector<double> bce_gradient(const FeatureMatrix& data, std::span<const double> weights,
                                 double intercept) {
  std::vector<double> grad(weights.size() + 1, 0.0);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    double z = dot(data.row(r), weights.data(), weights.size()) + intercept;
    double resid = stable_sigmoid(z) - data.labels[r];
    const double* x = data.row(r);
    for (std::size_t c = 0; c < weights.size(); ++c) grad[c] += resid * x[c];
    grad.back() += resid;
  }
  double inv_n = 1.0 / static_cast<double>(data.rows());
  for (double& g : grad) g *= inv_n;
  return grad;
}

namespace {

double logit(double p) {
  p = std::clamp(p, 1e-9, 1.0 - 1e-9);
  return std::log(p / (1.0 - p));
}

double l1_norm(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += std::abs(v);
  return s;
}

struct ProxPoint {
  std::vector<double> w;
  double b = 0.0;
};

// One backtracked proximal step from `from` using the gradient there.
// Returns the accepted candidate and updates the step scale L in place.
ProxPoint prox_step(const FeatureMatrix& data, const ProxPoint& from, double lambda, double& L) {
  double g_from = bce_objective(data, from.w, from.b);
  std::vector<double> grad = bce_gradient(data, from.w, from.b);

  for (int tries = 0; tries < 64; ++tries) {
    ProxPoint cand;
    cand.w.resize(from.w.size());
    for (std::size_t j = 0; j < from.w.size(); ++j) {
      cand.w[j] = soft_threshold(from.w[j] - grad[j] / L, lambda / L);
    }
    cand.b = from.b - grad.back() / L;

    double lin = 0.0, quad = 0.0;
    for (std::size_t j = 0; j < from.w.size(); ++j) {
      double d = cand.w[j] - from.w[j];
      lin += grad[j] * d;
      quad += d * d;
    }
    double db = cand.b - from.b;
    lin += grad.back() * db;
    quad += db * db;

    double g_cand = bce_objective(data, cand.w, cand.b);
    if (g_cand <= g_from + lin + 0.5 * L * quad + 1e-15) {
      return cand;
    }
    L *= 2.0;
  }
  throw std::runtime_error("lasso: backtracking line search failed to find a step");
}

LinearModel fit_lasso_core(const FeatureMatrix& train, double lambda, const LassoConfig& cfg,
                           const ProxPoint* init) {
  if (train.rows() == 0) throw std::runtime_error("lasso: empty training matrix");
  std::size_t pos = train.positives();
  if (pos == 0 || pos == train.rows()) {
    throw std::runtime_error("lasso: training data has a single class");
  }

  ProxPoint x;
  if (init) {
    x = *init;
  } else {
    x.w.assign(train.cols(), 0.0);
    x.b = logit(static_cast<double>(pos) / static_cast<double>(train.rows()));
  }
  ProxPoint x_prev = x;

  double L = 1.0;
  double t = 1.0;
  double objective = bce_objective(train, x.w, x.b) + lambda * l1_norm(x.w);

  LinearModel model;
  model.lambda = lambda;
  model.feature_names = train.feature_names();
  model.training_log.push_back(objective);

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    ProxPoint probe = x;
    double t_next = t;
    if (cfg.acceleration) {
      t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      double momentum = (t - 1.0) / t_next;
      for (std::size_t j = 0; j < x.w.size(); ++j) {
        probe.w[j] = x.w[j] + momentum * (x.w[j] - x_prev.w[j]);
      }
      probe.b = x.b + momentum * (x.b - x_prev.b);
    }

    L *= 0.9;  // re-probe the local curvature each iteration
    ProxPoint cand = prox_step(train, probe, lambda, L);
    double cand_obj = bce_objective(train, cand.w, cand.b) + lambda * l1_norm(cand.w);

    if (cand_obj > objective && cfg.acceleration) {
      // Momentum overshot; restart from the last accepted point. A plain
      // backtracked proximal step never increases the objective.
      t_next = 1.0;
      cand = prox_step(train, x, lambda, L);
      cand_obj = bce_objective(train, cand.w, cand.b) + lambda * l1_norm(cand.w);
    }

    if (!std::isfinite(cand_obj)) {
      std::ostringstream msg;
      msg << "lasso: non-finite objective at iteration " << iter << " (lambda " << lambda
          << "); last objectives:";
      std::size_t tail = std::min<std::size_t>(5, model.training_log.size());
      for (std::size_t i = model.training_log.size() - tail; i < model.training_log.size(); ++i) {
        msg << " " << model.training_log[i];
      }
      throw std::runtime_error(msg.str());
    }

    x_prev = x;
    x = cand;
    t = t_next;
    double prev_objective = objective;
    objective = std::min(cand_obj, objective);  // guard float noise in the log
    model.training_log.push_back(objective);

    if (std::abs(prev_objective - cand_obj) <= cfg.tol * std::max(1.0, std::abs(cand_obj))) {
      break;
    }
  }

  model.weights = x.w;
  model.intercept = x.b;
  return model;
}

FeatureMatrix copy_rows(const FeatureMatrix& m, const std::vector<std::size_t>& idx) {
  FeatureMatrix out;
  out.columns = m.columns;
  out.scaler = m.scaler;
  for (std::size_t r : idx) {
    out.row_keys.push_back(m.row_keys[r]);
    out.labels.push_back(m.labels[r]);
    const double* row = m.row(r);
    out.values.insert(out.values.end(), row, row + m.cols());
  }
  return out;
}

}  // namespace

double lasso_lambda_max(const FeatureMatrix& train) {
  std::size_t pos = train.positives();
  if (pos == 0 || pos == train.rows()) {
    throw std::runtime_error("lasso: training data has a single class");
  }
  std::vector<double> zero(train.cols(), 0.0);
  double b = logit(static_cast<double>(pos) / static_cast<double>(train.rows()));
  std::vector<double> grad = bce_gradient(train, zero, b);
  double lmax = 0.0;
  for (std::size_t j = 0; j < train.cols(); ++j) lmax = std::max(lmax, std::abs(grad[j]));
  return lmax;
}

std::vector<double> default_lambda_grid(const FeatureMatrix& train, int count) {
  double lmax = lasso_lambda_max(train);
  std::vector<double> grid;
  grid.reserve(count);
  for (int i = 0; i < count; ++i) {
    double frac = count > 1 ? static_cast<double>(i) / (count - 1) : 0.0;
    grid.push_back(lmax * std::pow(1e-3, frac));
  }
  return grid;
}

LinearModel fit_lasso_at(const FeatureMatrix& train, double lambda, const LassoConfig& cfg) {
  return fit_lasso_core(train, lambda, cfg, nullptr);
}

double select_lambda(const FeatureMatrix& train, const LassoConfig& cfg) {
  std::vector<double> grid = cfg.lambda_grid.empty() ? default_lambda_grid(train)
                                                     : cfg.lambda_grid;
  if (grid.empty()) throw std::runtime_error("lasso: empty lambda grid");
  if (!std::is_sorted(grid.rbegin(), grid.rend())) {
    throw std::runtime_error("lasso: lambda grid must be sorted descending");
  }
  if (grid.size() == 1) return grid.front();

  // Stratified inner split keeps both classes in the validation fold.
  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t r = 0; r < train.rows(); ++r) {
    (train.labels[r] ? pos_idx : neg_idx).push_back(r);
  }
  std::mt19937_64 rng = child_rng(cfg.seed, rng_stream::kLasso);
  std::shuffle(pos_idx.begin(), pos_idx.end(), rng);
  std::shuffle(neg_idx.begin(), neg_idx.end(), rng);
  auto val_pos = std::max<std::size_t>(1, std::llround(cfg.val_fraction * pos_idx.size()));
  auto val_neg = std::max<std::size_t>(1, std::llround(cfg.val_fraction * neg_idx.size()));
  if (val_pos >= pos_idx.size() || val_neg >= neg_idx.size()) {
    throw std::runtime_error("lasso: too few rows per class for lambda selection");
  }

  std::vector<std::size_t> val_idx(pos_idx.begin(), pos_idx.begin() + val_pos);
  val_idx.insert(val_idx.end(), neg_idx.begin(), neg_idx.begin() + val_neg);
  std::vector<std::size_t> fit_idx(pos_idx.begin() + val_pos, pos_idx.end());
  fit_idx.insert(fit_idx.end(), neg_idx.begin() + val_neg, neg_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(fit_idx.begin(), fit_idx.end());

  FeatureMatrix inner = copy_rows(train, fit_idx);
  FeatureMatrix val = copy_rows(train, val_idx);
  std::vector<int> val_labels = val.labels;

  double best_lambda = grid.front();
  double best_auc = -1.0;
  ProxPoint warm;
  warm.w.assign(train.cols(), 0.0);
  warm.b = logit(static_cast<double>(inner.positives()) / inner.rows());
  for (double lambda : grid) {  // descending: strict > keeps the sparser tie winner
    LinearModel m = fit_lasso_core(inner, lambda, cfg, &warm);
    warm.w = m.weights;
    warm.b = m.intercept;
    double auc = roc_auc(predict_proba(m, val), val_labels);
    if (auc > best_auc) {
      best_auc = auc;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

LinearModel fit_lasso(const FeatureMatrix& train, const LassoConfig& cfg) {
  double lambda = select_lambda(train, cfg);
  return fit_lasso_at(train, lambda, cfg);
}

std::vector<double> predict_proba(const LinearModel& model, const FeatureMatrix& rows) {
  if (rows.cols() != model.weights.size()) {
    throw std::runtime_error("linear model width " + std::to_string(model.weights.size()) +
                             " does not match matrix width " + std::to_string(rows.cols()));
  }
  std::vector<double> out(rows.rows());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    out[r] = stable_sigmoid(dot(rows.row(r), model.weights.data(), model.weights.size()) +
                            model.intercept);
  }
  return out;
}

double predict_proba_row(const LinearModel& model, std::span<const double> row) {
  if (row.size() != model.weights.size()) {
    throw std::runtime_error("linear model width does not match row width");
  }
  return stable_sigmoid(dot(row.data(), model.weights.data(), row.size()) + model.intercept);
}

double kkt_violation(const LinearModel& model, const FeatureMatrix& train) {
  std::vector<double> grad = bce_gradient(train, model.weights, model.intercept);
  double worst = std::abs(grad.back());  // unpenalized intercept: gradient ~ 0
  for (std::size_t j = 0; j < model.weights.size(); ++j) {
    double g = std::abs(grad[j]);
    double viol = model.weights[j] != 0.0 ? std::abs(g - model.lambda)
                                          : std::max(0.0, g - model.lambda);
    worst = std::max(worst, viol);
  }
  return worst;
}

std::string linear_model_to_json(const LinearModel& model, const std::string& scaler_ref) {
  nlohmann::json j;
  j["kind"] = "lasso_logistic";
  j["feature_names"] = model.feature_names;
  nlohmann::json weights = nlohmann::json::object();
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    weights[model.feature_names[i]] = model.weights[i];
  }
  j["weights"] = weights;
  j["intercept"] = model.intercept;
  j["lambda"] = model.lambda;
  j["scaler_ref"] = scaler_ref;
  j["training"] = {{"iterations", model.training_log.size()},
                   {"final_objective", model.training_log.empty() ? 0.0
                                                                  : model.training_log.back()}};
  return j.dump(2) + "\n";
}

void save_linear_model_json(const std::string& path, const LinearModel& model,
                            const std::string& scaler_ref) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model: " + path);
  out << linear_model_to_json(model, scaler_ref);
}

LinearModel load_linear_model_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model: " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("kind") != "lasso_logistic") {
    throw std::runtime_error(path + " is not a linear model file");
  }
  LinearModel m;
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& name : m.feature_names) {
    m.weights.push_back(j.at("weights").at(name).get<double>());
  }
  m.intercept = j.at("intercept").get<double>();
  m.lambda = j.at("lambda").get<double>();
  return m;
}

}  // namespace asthmarisk
