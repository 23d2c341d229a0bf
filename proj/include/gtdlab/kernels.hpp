#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gtdlab/matrix.hpp"

// Dense/sparse linear-algebra kernels behind the model math. Every kernel has
// a straightforward serial reference under kernels::serial and an OpenMP
// variant parallelized over independent output rows. Each output element is
// accumulated in double in a fixed index order by exactly one thread, so the
// parallel results are bit-identical to the serial ones for any thread count.

namespace gtdlab::kernels {

/// Max threads for kernel-internal parallelism. Initialized from the
/// GTD_LAB_THREADS environment variable on first use; defaults to 1.
int threads();
void set_threads(int n);

/// Read-only CSR view (values may be null for unweighted use).
struct CsrView {
  int rows = 0;
  const int64_t* row_ptr = nullptr;
  const int* col = nullptr;
  const float* val = nullptr;
};

namespace serial {

// C = A * B
template <typename T>
void matmul(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  c = Mat<T>(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += double(a.at(i, k)) * double(b.at(k, j));
      c.at(i, j) = T(acc);
    }
  }
}

// C = A^T * B, with A (n x k), B (n x m), C (k x m)
template <typename T>
void matmul_at_b(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  c = Mat<T>(a.cols, b.cols);
  for (int i = 0; i < a.cols; ++i) {
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int n = 0; n < a.rows; ++n) acc += double(a.at(n, i)) * double(b.at(n, j));
      c.at(i, j) = T(acc);
    }
  }
}

// C = A * B^T, with A (n x m), B (k x m), C (n x k)
template <typename T>
void matmul_abt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  c = Mat<T>(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += double(a.at(i, k)) * double(b.at(j, k));
      c.at(i, j) = T(acc);
    }
  }
}

// C = S * B for sparse S in CSR form
template <typename T>
void spmm(const CsrView& s, const Mat<T>& b, Mat<T>& c) {
  c = Mat<T>(s.rows, b.cols);
  std::vector<double> buf(b.cols);
  for (int i = 0; i < s.rows; ++i) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int64_t e = s.row_ptr[i]; e < s.row_ptr[i + 1]; ++e) {
      double v = s.val ? double(s.val[e]) : 1.0;
      const T* brow = b.row(s.col[e]);
      for (int j = 0; j < b.cols; ++j) buf[j] += v * double(brow[j]);
    }
    T* crow = c.row(i);
    for (int j = 0; j < b.cols; ++j) crow[j] = T(buf[j]);
  }
}

}  // namespace serial

namespace detail {

template <typename T>
void matmul_rows(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, int lo, int hi) {
  std::vector<double> buf(b.cols);
  for (int i = lo; i < hi; ++i) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const T* arow = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      double av = double(arow[k]);
      if (av == 0.0) continue;
      const T* brow = b.row(k);
      for (int j = 0; j < b.cols; ++j) buf[j] += av * double(brow[j]);
    }
    T* crow = c.row(i);
    for (int j = 0; j < b.cols; ++j) crow[j] = T(buf[j]);
  }
}

// block of output rows [lo, hi) of A^T B; scans A and B rows once
template <typename T>
void matmul_at_b_rows(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, int lo, int hi) {
  const int m = b.cols;
  std::vector<double> buf(static_cast<size_t>(hi - lo) * m, 0.0);
  for (int n = 0; n < a.rows; ++n) {
    const T* arow = a.row(n);
    const T* brow = b.row(n);
    for (int i = lo; i < hi; ++i) {
      double av = double(arow[i]);
      if (av == 0.0) continue;
      double* out = buf.data() + static_cast<size_t>(i - lo) * m;
      for (int j = 0; j < m; ++j) out[j] += av * double(brow[j]);
    }
  }
  for (int i = lo; i < hi; ++i) {
    T* crow = c.row(i);
    const double* out = buf.data() + static_cast<size_t>(i - lo) * m;
    for (int j = 0; j < m; ++j) crow[j] = T(out[j]);
  }
}

template <typename T>
void matmul_abt_rows(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, int lo, int hi) {
  for (int i = lo; i < hi; ++i) {
    const T* arow = a.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const T* brow = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += double(arow[k]) * double(brow[k]);
      c.at(i, j) = T(acc);
    }
  }
}

template <typename T>
void spmm_rows(const CsrView& s, const Mat<T>& b, Mat<T>& c, int lo, int hi) {
  std::vector<double> buf(b.cols);
  for (int i = lo; i < hi; ++i) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int64_t e = s.row_ptr[i]; e < s.row_ptr[i + 1]; ++e) {
      double v = s.val ? double(s.val[e]) : 1.0;
      const T* brow = b.row(s.col[e]);
      for (int j = 0; j < b.cols; ++j) buf[j] += v * double(brow[j]);
    }
    T* crow = c.row(i);
    for (int j = 0; j < b.cols; ++j) crow[j] = T(buf[j]);
  }
}

// Runs fn(lo, hi) over a static partition of [0, rows).
void parallel_row_blocks(int rows, const std::function<void(int, int)>& fn);

}  // namespace detail

template <typename T>
void matmul(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  c = Mat<T>(a.rows, b.cols);
  detail::parallel_row_blocks(a.rows, [&](int lo, int hi) { detail::matmul_rows(a, b, c, lo, hi); });
}

template <typename T>
void matmul_at_b(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  c = Mat<T>(a.cols, b.cols);
  detail::parallel_row_blocks(a.cols, [&](int lo, int hi) { detail::matmul_at_b_rows(a, b, c, lo, hi); });
}

template <typename T>
void matmul_abt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  c = Mat<T>(a.rows, b.rows);
  detail::parallel_row_blocks(a.rows, [&](int lo, int hi) { detail::matmul_abt_rows(a, b, c, lo, hi); });
}

template <typename T>
void spmm(const CsrView& s, const Mat<T>& b, Mat<T>& c) {
  c = Mat<T>(s.rows, b.cols);
  detail::parallel_row_blocks(s.rows, [&](int lo, int hi) { detail::spmm_rows(s, b, c, lo, hi); });
}

/// Column sums with double accumulation (row index ascending).
template <typename T>
std::vector<T> colsum(const Mat<T>& a) {
  std::vector<double> acc(a.cols, 0.0);
  for (int i = 0; i < a.rows; ++i) {
    const T* arow = a.row(i);
    for (int j = 0; j < a.cols; ++j) acc[j] += double(arow[j]);
  }
  std::vector<T> out(a.cols);
  for (int j = 0; j < a.cols; ++j) out[j] = T(acc[j]);
  return out;
}

template <typename T>
void add_bias_rows(Mat<T>& a, const std::vector<T>& bias) {
  for (int i = 0; i < a.rows; ++i) {
    T* arow = a.row(i);
    for (int j = 0; j < a.cols; ++j) arow[j] += bias[j];
  }
}

template <typename T>
void relu_inplace(Mat<T>& a) {
  for (auto& v : a.data)
    if (v < T(0)) v = T(0);
}

/// dz := dz masked by (z > 0)
template <typename T>
void relu_backward_inplace(Mat<T>& dz, const Mat<T>& z) {
  for (size_t i = 0; i < dz.data.size(); ++i)
    if (z.data[i] <= T(0)) dz.data[i] = T(0);
}

}  // namespace gtdlab::kernels
