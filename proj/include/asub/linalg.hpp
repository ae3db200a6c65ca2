#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "asub/errors.hpp"

namespace asub {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Largest singular value. Empty matrices have norm 0.
inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double orthogonality_defect(const Matrix& w) {
  return max_abs(w.transpose() * w - Matrix::Identity(w.cols(), w.cols()));
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw ArgumentError(std::string(what) + ": expected dimension " + std::to_string(want) +
                        ", got " + std::to_string(got));
  }
}

inline void require_symmetric(const Matrix& a, double rel_tol, const char* what) {
  if (a.rows() != a.cols()) throw ArgumentError(std::string(what) + ": matrix is not square");
  const double scale = max_abs(a);
  if (max_abs(a - a.transpose()) > rel_tol * std::max(scale, 1e-300)) {
    throw ArgumentError(std::string(what) + ": matrix is not symmetric");
  }
}

/// Orthonormal factor of a square matrix, columns sign-fixed so that R has a positive diagonal.
inline Matrix orthonormalize(const Matrix& g) {
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

}  // namespace asub
