#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lgc/error.hpp"

namespace lgc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Zero / dead-band thresholds for deciding the rank of a symmetric matrix.
///
/// An eigenvalue counts as zero when |lambda| < zero * max(1, radius) and as
/// nonzero when |lambda| >= ambiguous * max(1, radius). Anything in between
/// raises RankAmbiguity.
struct RankTolerance {
  double zero = 1e-8;
  double ambiguous = 1e-6;
};

struct SymmetricSpectrum {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // orthonormal columns
  std::vector<bool> is_zero;
  double radius = 0.0;

  int rank() const {
    return static_cast<int>(std::count(is_zero.begin(), is_zero.end(), false));
  }
  int positive() const {
    int count = 0;
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
      if (!is_zero[i] && eigenvalues[i] > 0) ++count;
    return count;
  }
  int negative() const { return rank() - positive(); }
};

inline SymmetricSpectrum decide_spectrum(const Matrix& symmetric, RankTolerance tol = {}) {
  SymmetricSpectrum out;
  const auto n = symmetric.rows();
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (symmetric + symmetric.transpose()));
  out.eigenvalues = solver.eigenvalues();
  out.eigenvectors = solver.eigenvectors();
  out.radius = out.eigenvalues.cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, out.radius);
  out.is_zero.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mag = std::abs(out.eigenvalues[i]);
    if (mag < tol.zero * scale) {
      out.is_zero[i] = true;
    } else if (mag < tol.ambiguous * scale) {
      throw RankAmbiguity(out.eigenvalues[i]);
    } else {
      out.is_zero[i] = false;
    }
  }
  return out;
}

/// Matrix of sum_i d(xi_i) ^ d(x_i) in (x, xi) ordering: omega(u, v) = u^T J v.
inline Matrix standard_symplectic(int n) {
  Matrix j = Matrix::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n) = -Matrix::Identity(n, n);
  j.bottomLeftCorner(n, n) = Matrix::Identity(n, n);
  return j;
}

/// Matrix of sum_i dq_i ^ dp_i in (q, p) ordering, the phase-space convention.
inline Matrix canonical_symplectic(int n) { return -standard_symplectic(n); }

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double smallest_singular_ratio(const Matrix& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s[0] == 0.0) return 0.0;
  return s[s.size() - 1] / s[0];
}

}  // namespace lgc
