#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "asthmarisk/features.hpp"
#include "asthmarisk/linalg.hpp"

namespace asthmarisk {

struct MlpConfig {
  std::vector<int> hidden_sizes = {32, 16};  // two hidden layers by default
  double leaky_alpha = 0.1;
  double dropout_rate = 0.5;
  double learning_rate = 0.01;
  int batch_size = 32;
  int epochs = 100;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // The reference setup trains a fixed number of epochs; early stop is
  // opt-in.
  bool early_stop = false;
  double early_stop_tol = 1e-5;
  int early_stop_patience = 10;
};

struct MlpModel {
  MlpConfig config;
  std::vector<Mat> weights;                 // weights[l]: dims[l] x dims[l+1]
  std::vector<std::vector<double>> biases;  // biases[l]: dims[l+1]
  std::vector<double> training_log;         // per-epoch mean train loss
  std::vector<std::string> feature_names;

  std::size_t input_size() const { return weights.empty() ? 0 : weights.front().rows; }
  std::size_t layer_count() const { return weights.size(); }
};

double leaky_relu(double x, double alpha);
// Gradient convention at exactly 0: alpha.
double leaky_relu_grad(double x, double alpha);

// Mean of -[y ln p + (1-y) ln(1-p)] with probs clipped to [eps, 1-eps],
// eps = 1e-12.
double bce_loss(const std::vector<double>& probs, const std::vector<int>& labels);

struct ForwardCache {
  Mat input;
  std::vector<Mat> pre;     // pre-activations per layer
  std::vector<Mat> hidden;  // hidden activations after dropout (inputs to next layer)
  std::vector<Mat> mask;    // dropout multipliers per hidden layer (0 or 1/(1-rate))
  std::vector<double> probs;
};

// Seeded uniform init scaled by 1/sqrt(fan_in); biases zero. Same seed gives
// bitwise-identical weights.
MlpModel init_mlp(std::size_t input_size, const MlpConfig& cfg);

// mask_rng == nullptr is inference: no mask, no scaling. With mask_rng set,
// hidden activations get inverted dropout (zeroed with prob rate, survivors
// scaled by 1/(1-rate)). cache may be null when only probabilities matter.
std::vector<double> mlp_forward(const MlpModel& model, const Mat& batch, ForwardCache* cache,
                                std::mt19937_64* mask_rng);

struct MlpGradients {
  std::vector<Mat> weights;
  std::vector<std::vector<double>> biases;
};

// Gradients of mean BCE w.r.t. every parameter, reusing the cache's dropout
// masks so they match the forward pass exactly.
MlpGradients mlp_backward(const MlpModel& model, const ForwardCache& cache,
                          const std::vector<int>& labels);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
};

struct AdamParams {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamParams& hp);

// Mini-batch Adam with per-epoch seeded shuffling. Throws on non-finite loss
// with the epoch/batch in the message.
MlpModel train_mlp(const FeatureMatrix& train, const MlpConfig& cfg);

std::vector<double> predict_proba(const MlpModel& model, const FeatureMatrix& rows);

// d(probability)/d(input_j) for one row, inference mode; used to rank
// feature contributions in alert reports.
std::vector<double> input_gradient(const MlpModel& model, std::span<const double> row);

std::string mlp_to_json(const MlpModel& model, const std::string& scaler_ref);
void save_mlp_json(const std::string& path, const MlpModel& model,
                   const std::string& scaler_ref);
MlpModel load_mlp_json(const std::string& path);

}  // namespace asthmarisk
