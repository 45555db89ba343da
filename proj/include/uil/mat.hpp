#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace uil {

// Dense row-major matrix of doubles. Small graphs only; no sparse storage.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

  size_t size() const { return a.size(); }
  bool empty() const { return a.empty(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

inline double mat_sum(const Mat& m) {
  double s = 0.0;
  for (double v : m.a) s += v;
  return s;
}

inline double mat_max_abs(const Mat& m) {
  double s = 0.0;
  for (double v : m.a) {
    double x = v < 0 ? -v : v;
    if (x > s) s = x;
  }
  return s;
}

// C += A * B
void mat_mul_acc(Mat& c, const Mat& a, const Mat& b);
// C += A * B^T
void mat_mul_nt_acc(Mat& c, const Mat& a, const Mat& b);
// C += A^T * B
void mat_mul_tn_acc(Mat& c, const Mat& a, const Mat& b);

}  // namespace uil
