#pragma once

#include "gradbasis/common.hpp"

namespace gradbasis {

/// Orthonormal set of column vectors in R^ambient_dim.
struct SubspaceBasis {
  Eigen::Index ambient_dim = 0;
  Matrix basis;  // ambient_dim x k, orthonormal columns; k may be 0
  double tol = 0.0;

  Eigen::Index dimension() const { return basis.cols(); }
};

struct SvdResult {
  Matrix u;       // thin left factor, orthonormal columns
  Vector sigma;   // nonincreasing, nonnegative
  Matrix v;       // thin right factor, orthonormal columns
};

/// Thin SVD. Throws InvalidInput on non-finite entries.
SvdResult svd(const Matrix& a);

/// Number of singular values above rtol * sigma_max (0 for the zero matrix).
Eigen::Index numerical_rank(const Matrix& a, double rtol);
Eigen::Index numerical_rank(const Matrix& a);

/// Orthonormal basis of { w : w^T a = 0 } with dimension rows - rank.
SubspaceBasis left_null_space(const Matrix& a, double rtol);
SubspaceBasis left_null_space(const Matrix& a);

/// Minimum-Euclidean-norm minimizer of sum_i w_i (a_i . x - b_i)^2, via
/// row scaling by sqrt(w_i) followed by SVD pseudoinversion at cutoff rtol.
Vector min_norm_lstsq(const Matrix& a, const Vector& b, const Vector& w, double rtol);
Vector min_norm_lstsq(const Matrix& a, const Vector& b, const Vector& w);

/// Orthonormal basis of the column space at the given rank cutoff.
SubspaceBasis column_space(const Matrix& a, double rtol);

/// Residual norm of projecting v onto span(basis); basis must be orthonormal.
double projection_residual(const SubspaceBasis& space, const Vector& v);

}  // namespace gradbasis
