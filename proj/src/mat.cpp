#include "uil/mat.hpp"

#include <stdexcept>

namespace uil {

// ikj order keeps the inner loop contiguous in both B and C.
void mat_mul_acc(Mat& c, const Mat& a, const Mat& b) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw std::runtime_error("mat_mul_acc shape mismatch");
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int k = 0; k < a.cols; ++k) {
      double aik = ar[k];
      if (aik == 0.0) continue;
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) cr[j] += aik * br[j];
    }
  }
}

void mat_mul_nt_acc(Mat& c, const Mat& a, const Mat& b) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    throw std::runtime_error("mat_mul_nt_acc shape mismatch");
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      cr[j] += s;
    }
  }
}

void mat_mul_tn_acc(Mat& c, const Mat& a, const Mat& b) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw std::runtime_error("mat_mul_tn_acc shape mismatch");
  for (int k = 0; k < a.rows; ++k) {
    const double* ar = a.row(k);
    const double* br = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      double aki = ar[i];
      if (aki == 0.0) continue;
      double* cr = c.row(i);
      for (int j = 0; j < b.cols; ++j) cr[j] += aki * br[j];
    }
  }
}

}  // namespace uil
