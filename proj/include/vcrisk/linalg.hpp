#pragma once

#include <cmath>
#include <cstddef>

namespace vcrisk {

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
/// A is row-major n x n, b has n entries; on success b holds the solution.
/// Returns false when a pivot falls below `tol` (singular system).
inline bool solve_dense(double* A, double* b, int n, double tol = 1e-12) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::abs(A[col * n + col]);
    for (int r = col + 1; r < n; ++r) {
      const double v = std::abs(A[r * n + col]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (!(best > tol)) return false;
    if (piv != col) {
      for (int c = col; c < n; ++c) std::swap(A[col * n + c], A[piv * n + c]);
      std::swap(b[col], b[piv]);
    }
    const double inv = 1.0 / A[col * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double f = A[r * n + col] * inv;
      if (f == 0.0) continue;
      A[r * n + col] = 0.0;
      for (int c = col + 1; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
      b[r] -= f * b[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= A[r * n + c] * b[c];
    b[r] = s / A[r * n + r];
  }
  return true;
}

}  // namespace vcrisk
