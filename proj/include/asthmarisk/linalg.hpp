#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace asthmarisk {

// Row-major dense matrix. Everything here is small (thousands of rows, tens
// of columns), so plain loops in a fixed order keep results bitwise
// reproducible across runs.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }
  double* row_ptr(std::size_t r) { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }
};

inline double stable_sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow; equals -log(sigmoid(-z)).
inline double softplus(double z) {
  double m = z > 0.0 ? z : 0.0;
  return m + std::log1p(std::exp(-std::abs(z)));
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace asthmarisk
