#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace gtdlab {

/// Dense row-major matrix. Parameters and activations are float; double
/// instantiations exist for high-precision verification paths.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, T(0)) {}

  T* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const T* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

  T& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  const T& at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  size_t size() const { return data.size(); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

using Matrix = Mat<float>;
using MatrixD = Mat<double>;

template <typename To, typename From>
Mat<To> convert(const Mat<From>& m) {
  Mat<To> out(m.rows, m.cols);
  for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<To>(m.data[i]);
  return out;
}

}  // namespace gtdlab
