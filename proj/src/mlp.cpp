#include "asthmarisk/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "asthmarisk/rng.hpp"

namespace asthmarisk {

double leaky_relu(double x, double alpha) { return x > 0.0 ? x : alpha * x; }
double leaky_relu_grad(double x, double alpha) { return x > 0.0 ? 1.0 : alpha; }

double bce_loss(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw std::runtime_error("bce_loss: probs/labels size mismatch");
  }
  constexpr double eps = 1e-12;
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = std::clamp(probs[i], eps, 1.0 - eps);
    sum -= labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return sum / static_cast<double>(probs.size());
}

MlpModel init_mlp(std::size_t input_size, const MlpConfig& cfg) {
  if (input_size == 0) throw std::runtime_error("mlp: zero input size");
  for (int h : cfg.hidden_sizes) {
    if (h <= 0) throw std::runtime_error("mlp: hidden layer size must be positive");
  }
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0) {
    throw std::runtime_error("mlp: dropout_rate must lie in [0, 1)");
  }
  if (cfg.learning_rate <= 0.0) throw std::runtime_error("mlp: learning_rate must be positive");
  if (cfg.leaky_alpha < 0.0) throw std::runtime_error("mlp: leaky_alpha must be nonnegative");

  std::vector<std::size_t> dims;
  dims.push_back(input_size);
  for (int h : cfg.hidden_sizes) dims.push_back(static_cast<std::size_t>(h));
  dims.push_back(1);

  MlpModel model;
  model.config = cfg;
  std::mt19937_64 rng = child_rng(cfg.seed, rng_stream::kMlp);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    std::uniform_real_distribution<double> unif(-bound, bound);
    Mat w(dims[l], dims[l + 1]);
    for (double& v : w.data) v = unif(rng);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(dims[l + 1], 0.0);
  }
  return model;
}

std::vector<double> mlp_forward(const MlpModel& model, const Mat& batch, ForwardCache* cache,
                                std::mt19937_64* mask_rng) {
  if (batch.cols != model.input_size()) {
    throw std::runtime_error("mlp: batch width " + std::to_string(batch.cols) +
                             " does not match input size " +
                             std::to_string(model.input_size()));
  }
  std::size_t layers = model.layer_count();
  double alpha = model.config.leaky_alpha;
  double rate = model.config.dropout_rate;
  bool train_mode = mask_rng != nullptr;

  if (cache) {
    cache->input = batch;
    cache->pre.clear();
    cache->hidden.clear();
    cache->mask.clear();
  }

  Mat act = batch;
  std::vector<double> probs;
  for (std::size_t l = 0; l < layers; ++l) {
    const Mat& w = model.weights[l];
    const std::vector<double>& b = model.biases[l];
    Mat z(act.rows, w.cols);
    for (std::size_t r = 0; r < act.rows; ++r) {
      const double* in = act.row_ptr(r);
      double* out = z.row_ptr(r);
      for (std::size_t c = 0; c < w.cols; ++c) out[c] = b[c];
      for (std::size_t k = 0; k < w.rows; ++k) {
        double v = in[k];
        if (v == 0.0) continue;
        const double* wrow = w.row_ptr(k);
        for (std::size_t c = 0; c < w.cols; ++c) out[c] += v * wrow[c];
      }
    }
    if (cache) cache->pre.push_back(z);

    if (l + 1 == layers) {
      probs.resize(z.rows);
      for (std::size_t r = 0; r < z.rows; ++r) probs[r] = stable_sigmoid(z(r, 0));
    } else {
      Mat h(z.rows, z.cols);
      for (std::size_t i = 0; i < z.data.size(); ++i) h.data[i] = leaky_relu(z.data[i], alpha);
      if (train_mode && rate > 0.0) {
        Mat mask(z.rows, z.cols);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double keep_scale = 1.0 / (1.0 - rate);
        for (double& m : mask.data) m = unif(*mask_rng) < rate ? 0.0 : keep_scale;
        for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] *= mask.data[i];
        if (cache) cache->mask.push_back(std::move(mask));
      } else if (cache) {
        Mat mask(z.rows, z.cols);
        std::fill(mask.data.begin(), mask.data.end(), 1.0);
        cache->mask.push_back(std::move(mask));
      }
      if (cache) cache->hidden.push_back(h);
      act = std::move(h);
    }
  }
  if (cache) cache->probs = probs;
  return probs;
}

MlpGradients mlp_backward(const MlpModel& model, const ForwardCache& cache,
                          const std::vector<int>& labels) {
  std::size_t layers = model.layer_count();
  std::size_t batch = cache.input.rows;
  if (labels.size() != batch) throw std::runtime_error("mlp: labels do not match cached batch");
  double alpha = model.config.leaky_alpha;

  MlpGradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);

  // d(mean BCE)/d(z_out) = (p - y) / batch; sigmoid and BCE fold together.
  Mat delta(batch, 1);
  for (std::size_t r = 0; r < batch; ++r) {
    delta(r, 0) = (cache.probs[r] - labels[r]) / static_cast<double>(batch);
  }

  for (std::size_t l = layers; l-- > 0;) {
    const Mat& a_prev = l == 0 ? cache.input : cache.hidden[l - 1];
    Mat dw(model.weights[l].rows, model.weights[l].cols);
    std::vector<double> db(model.weights[l].cols, 0.0);
    for (std::size_t r = 0; r < batch; ++r) {
      const double* a = a_prev.row_ptr(r);
      const double* d = delta.row_ptr(r);
      for (std::size_t c = 0; c < dw.cols; ++c) db[c] += d[c];
      for (std::size_t k = 0; k < dw.rows; ++k) {
        double av = a[k];
        if (av == 0.0) continue;
        double* dwrow = dw.row_ptr(k);
        for (std::size_t c = 0; c < dw.cols; ++c) dwrow[c] += av * d[c];
      }
    }
    g.weights[l] = std::move(dw);
    g.biases[l] = std::move(db);

    if (l == 0) break;
    const Mat& w = model.weights[l];
    Mat prev(batch, w.rows);
    for (std::size_t r = 0; r < batch; ++r) {
      const double* d = delta.row_ptr(r);
      double* out = prev.row_ptr(r);
      for (std::size_t k = 0; k < w.rows; ++k) out[k] = dot(w.row_ptr(k), d, w.cols);
    }
    // Back through dropout (same mask) and the leaky ReLU.
    const Mat& mask = cache.mask[l - 1];
    const Mat& pre = cache.pre[l - 1];
    for (std::size_t i = 0; i < prev.data.size(); ++i) {
      prev.data[i] *= mask.data[i] * leaky_relu_grad(pre.data[i], alpha);
    }
    delta = std::move(prev);
  }
  return g;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamParams& hp) {
  if (params.size() != grads.size()) throw std::runtime_error("adam: shape mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.t = 0;
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grads[i];
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    params[i] -= hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
  }
}

MlpModel train_mlp(const FeatureMatrix& train, const MlpConfig& cfg) {
  if (train.rows() == 0) throw std::runtime_error("mlp: empty training matrix");
  std::size_t pos = train.positives();
  if (pos == 0 || pos == train.rows()) {
    throw std::runtime_error("mlp: training data has a single class");
  }
  if (cfg.batch_size <= 0) throw std::runtime_error("mlp: batch_size must be positive");

  MlpModel model = init_mlp(train.cols(), cfg);
  model.feature_names = train.feature_names();

  std::size_t n = train.rows();
  auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng = child_rng(cfg.seed, rng_stream::kMlp + 1);
  std::mt19937_64 dropout_rng = child_rng(cfg.seed, rng_stream::kMlp + 2);

  AdamParams hp{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  std::vector<AdamState> w_state(model.layer_count());
  std::vector<AdamState> b_state(model.layer_count());

  int stale_epochs = 0;
  double best_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      std::size_t count = std::min(batch_size, n - start);
      Mat batch(count, train.cols());
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        const double* row = train.row(order[start + i]);
        std::copy(row, row + train.cols(), batch.row_ptr(i));
        labels[i] = train.labels[order[start + i]];
      }

      ForwardCache cache;
      std::vector<double> probs = mlp_forward(model, batch, &cache, &dropout_rng);
      double loss = bce_loss(probs, labels);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "mlp: non-finite loss at epoch " << epoch << ", batch " << start / batch_size;
        throw std::runtime_error(msg.str());
      }
      loss_sum += loss * static_cast<double>(count);

      MlpGradients grads = mlp_backward(model, cache, labels);
      for (std::size_t l = 0; l < model.layer_count(); ++l) {
        adam_step(model.weights[l].data, grads.weights[l].data, w_state[l], hp);
        adam_step(model.biases[l], grads.biases[l], b_state[l], hp);
      }
    }
    double epoch_loss = loss_sum / static_cast<double>(n);
    model.training_log.push_back(epoch_loss);

    if (cfg.early_stop) {
      if (epoch_loss < best_loss - cfg.early_stop_tol) {
        best_loss = epoch_loss;
        stale_epochs = 0;
      } else if (++stale_epochs >= cfg.early_stop_patience) {
        break;
      }
    }
  }
  return model;
}

std::vector<double> predict_proba(const MlpModel& model, const FeatureMatrix& rows) {
  if (rows.cols() != model.input_size()) {
    throw std::runtime_error("mlp width " + std::to_string(model.input_size()) +
                             " does not match matrix width " + std::to_string(rows.cols()));
  }
  Mat batch(rows.rows(), rows.cols());
  batch.data.assign(rows.values.begin(), rows.values.end());
  return mlp_forward(model, batch, nullptr, nullptr);
}

std::vector<double> input_gradient(const MlpModel& model, std::span<const double> row) {
  if (row.size() != model.input_size()) {
    throw std::runtime_error("mlp input_gradient: row width mismatch");
  }
  Mat batch(1, row.size());
  std::copy(row.begin(), row.end(), batch.row_ptr(0));
  ForwardCache cache;
  mlp_forward(model, batch, &cache, nullptr);

  double p = cache.probs[0];
  std::vector<double> delta = {p * (1.0 - p)};  // d p / d z_out
  for (std::size_t l = model.layer_count(); l-- > 0;) {
    const Mat& w = model.weights[l];
    std::vector<double> prev(w.rows);
    for (std::size_t k = 0; k < w.rows; ++k) prev[k] = dot(w.row_ptr(k), delta.data(), w.cols);
    if (l > 0) {
      const Mat& pre = cache.pre[l - 1];
      for (std::size_t k = 0; k < prev.size(); ++k) {
        prev[k] *= leaky_relu_grad(pre(0, k), model.config.leaky_alpha);
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

std::string mlp_to_json(const MlpModel& model, const std::string& scaler_ref) {
  nlohmann::json j;
  j["kind"] = "mlp";
  j["feature_names"] = model.feature_names;
  j["config"] = {{"hidden_sizes", model.config.hidden_sizes},
                 {"leaky_alpha", model.config.leaky_alpha},
                 {"dropout_rate", model.config.dropout_rate},
                 {"learning_rate", model.config.learning_rate},
                 {"batch_size", model.config.batch_size},
                 {"epochs", model.config.epochs},
                 {"seed", model.config.seed},
                 {"adam_beta1", model.config.adam_beta1},
                 {"adam_beta2", model.config.adam_beta2},
                 {"adam_eps", model.config.adam_eps}};
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    layers.push_back({{"rows", model.weights[l].rows},
                      {"cols", model.weights[l].cols},
                      {"weights", model.weights[l].data},
                      {"bias", model.biases[l]}});
  }
  j["layers"] = layers;
  j["scaler_ref"] = scaler_ref;
  j["training"] = {{"epochs_run", model.training_log.size()},
                   {"final_loss",
                    model.training_log.empty() ? 0.0 : model.training_log.back()}};
  return j.dump(2) + "\n";
}

void save_mlp_json(const std::string& path, const MlpModel& model,
                   const std::string& scaler_ref) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model: " + path);
  out << mlp_to_json(model, scaler_ref);
}

MlpModel load_mlp_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model: " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("kind") != "mlp") throw std::runtime_error(path + " is not an mlp model file");
  MlpModel m;
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  const auto& c = j.at("config");
  m.config.hidden_sizes = c.at("hidden_sizes").get<std::vector<int>>();
  m.config.leaky_alpha = c.at("leaky_alpha").get<double>();
  m.config.dropout_rate = c.at("dropout_rate").get<double>();
  m.config.learning_rate = c.at("learning_rate").get<double>();
  m.config.batch_size = c.at("batch_size").get<int>();
  m.config.epochs = c.at("epochs").get<int>();
  m.config.seed = c.at("seed").get<std::uint64_t>();
  m.config.adam_beta1 = c.at("adam_beta1").get<double>();
  m.config.adam_beta2 = c.at("adam_beta2").get<double>();
  m.config.adam_eps = c.at("adam_eps").get<double>();
  for (const auto& layer : j.at("layers")) {
    Mat w(layer.at("rows").get<std::size_t>(), layer.at("cols").get<std::size_t>());
    w.data = layer.at("weights").get<std::vector<double>>();
    if (w.data.size() != w.rows * w.cols) {
      throw std::runtime_error(path + ": layer weight size mismatch");
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(layer.at("bias").get<std::vector<double>>());
  }
  return m;
}

}  // namespace asthmarisk
