#pragma once
// Dense row-major float32 matrix. All dot products and reductions accumulate
// in double; storage stays 32-bit.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mqr {

struct MatF {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  MatF() = default;
  MatF(std::size_t r, std::size_t c, float fill = 0.f)
      : rows(r), cols(c), data(r * c, fill) {}

  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool same_shape(const MatF& o) const { return rows == o.rows && cols == o.cols; }
  bool empty() const { return data.empty(); }

  friend bool operator==(const MatF& a, const MatF& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

inline double dot_f64(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

inline double l2_norm_f64(std::span<const float> a) {
  double acc = 0.0;
  for (float v : a) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

inline double l2_dist_sq_f64(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

}  // namespace mqr
