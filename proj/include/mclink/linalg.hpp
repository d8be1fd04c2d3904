#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mclink {

using Vec = std::vector<double>;

/// Dense row-major matrix. Small sizes only; no BLAS, no views.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return a.size(); }
  void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

inline Vec matvec(const Mat& m, const Vec& x) {
  if (static_cast<int>(x.size()) != m.cols) throw std::invalid_argument("matvec: dimension mismatch");
  Vec y(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double s = 0.0;
    const double* row = &m.a[static_cast<size_t>(r) * m.cols];
    for (int c = 0; c < m.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

/// y = M x + b
inline Vec affine(const Mat& m, const Vec& x, const Vec& b) {
  Vec y = matvec(m, x);
  if (y.size() != b.size()) throw std::invalid_argument("affine: bias dimension mismatch");
  for (size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

/// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
  assert(x.size() == y.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double dot(const Vec& x, const Vec& y) {
  assert(x.size() == y.size());
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

/// grads += outer(dy, x); the usual dL/dW accumulation for y = W x.
inline void accumulate_outer(const Vec& dy, const Vec& x, Mat& grads) {
  assert(static_cast<int>(dy.size()) == grads.rows && static_cast<int>(x.size()) == grads.cols);
  for (int r = 0; r < grads.rows; ++r) {
    double d = dy[r];
    if (d == 0.0) continue;
    double* row = &grads.a[static_cast<size_t>(r) * grads.cols];
    for (int c = 0; c < grads.cols; ++c) row[c] += d * x[c];
  }
}

/// x^T M, as a vector (backprop of y = M x toward x).
inline Vec matvec_transposed(const Mat& m, const Vec& dy) {
  assert(static_cast<int>(dy.size()) == m.rows);
  Vec dx(m.cols, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double d = dy[r];
    if (d == 0.0) continue;
    const double* row = &m.a[static_cast<size_t>(r) * m.cols];
    for (int c = 0; c < m.cols; ++c) dx[c] += d * row[c];
  }
  return dx;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: dimension mismatch");
  Mat c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      double v = a(i, k);
      if (v == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) c(i, j) += v * b(k, j);
    }
  return c;
}

inline Mat mat_identity(int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

inline Mat mat_pow(const Mat& m, int p) {
  if (m.rows != m.cols) throw std::invalid_argument("mat_pow: square matrix required");
  if (p < 0) throw std::invalid_argument("mat_pow: negative power");
  Mat acc = mat_identity(m.rows);
  for (int i = 0; i < p; ++i) acc = matmul(acc, m);
  return acc;
}

inline double frobenius_norm(const Mat& m) {
  double s = 0.0;
  for (double v : m.a) s += v * v;
  return std::sqrt(s);
}

inline double mean(const Vec& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double stddev(const Vec& x) {
  if (x.size() < 2) return 0.0;
  double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline double pearson(const Vec& x, const Vec& y) {
  assert(x.size() == y.size() && !x.empty());
  double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  double denom = std::sqrt(sxx * syy);
  return denom > 0.0 ? sxy / denom : 0.0;
}

}  // namespace mclink
