#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "asthmarisk/features.hpp"

namespace asthmarisk {

struct LassoConfig {
  std::vector<double> lambda_grid;  // sorted descending; empty = auto grid
  int max_iter = 20000;
  double tol = 1e-8;          // relative objective-change stop
  bool acceleration = true;   // FISTA with monotone restart
  double val_fraction = 0.2;  // inner validation split for lambda selection
  std::uint64_t seed = 0;
};

struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 0.0;
  std::vector<double> training_log;  // objective per accepted iteration
  std::vector<std::string> feature_names;
};

// sign(z) * max(|z| - t, 0): the L1 proximal operator.
double soft_threshold(double z, double t);

// Smallest penalty that zeroes every weight (intercept at logit(prevalence)).
double lasso_lambda_max(const FeatureMatrix& train);

// 20 log-spaced values from lambda_max down to lambda_max / 1000.
std::vector<double> default_lambda_grid(const FeatureMatrix& train, int count = 20);

// Proximal gradient on mean binary cross-entropy + lambda * ||w||_1 with
// backtracking line search; the logged objective never increases. Throws on
// a non-finite objective.
LinearModel fit_lasso_at(const FeatureMatrix& train, double lambda, const LassoConfig& cfg = {});

// Picks the grid value maximizing ROC AUC on a seeded stratified inner
// validation split; exact ties go to the larger (sparser) lambda.
double select_lambda(const FeatureMatrix& train, const LassoConfig& cfg);

// select_lambda (unless the grid is a single value) followed by a full-train
// fit at the winner.
LinearModel fit_lasso(const FeatureMatrix& train, const LassoConfig& cfg = {});

std::vector<double> predict_proba(const LinearModel& model, const FeatureMatrix& rows);
double predict_proba_row(const LinearModel& model, std::span<const double> row);

// Max KKT violation at the solution: active weights need |grad_j| = lambda,
// zero weights |grad_j| <= lambda.
double kkt_violation(const LinearModel& model, const FeatureMatrix& train);

// Gradient of the smooth part (mean BCE) at (weights, intercept); last entry
// is the intercept component. Exposed for finite-difference checks.
std::vector<double> bce_gradient(const FeatureMatrix& data, std::span<const double> weights,
                                 double intercept);
double bce_objective(const FeatureMatrix& data, std::span<const double> weights,
                     double intercept);

std::string linear_model_to_json(const LinearModel& model, const std::string& scaler_ref);
void save_linear_model_json(const std::string& path, const LinearModel& model,
                            const std::string& scaler_ref);
LinearModel load_linear_model_json(const std::string& path);

}  // namespace asthmarisk
