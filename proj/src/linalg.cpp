#include "gradbasis/linalg.hpp"

#include <Eigen/SVD>

namespace gradbasis {

namespace {

Eigen::JacobiSVD<Matrix> jacobi_svd(const Matrix& a, unsigned options) {
  if (!all_finite(a)) throw InvalidInput("svd: matrix has non-finite entries");
  return Eigen::JacobiSVD<Matrix>(a, options);
}

Eigen::Index rank_from_singular_values(const Vector& sigma, double rtol) {
  if (sigma.size() == 0) return 0;
  const double cutoff = rtol * sigma[0];
  Eigen::Index r = 0;
  while (r < sigma.size() && sigma[r] > cutoff && sigma[r] > 0.0) ++r;
  return r;
}

}  // namespace

SvdResult svd(const Matrix& a) {
  const auto dec = jacobi_svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return SvdResult{dec.matrixU(), dec.singularValues(), dec.matrixV()};
}

Eigen::Index numerical_rank(const Matrix& a, double rtol) {
  if (rtol <= 0.0) throw InvalidInput("numerical_rank: rtol must be positive");
  const auto dec = jacobi_svd(a, 0);
  return rank_from_singular_values(dec.singularValues(), rtol);
}

Eigen::Index numerical_rank(const Matrix& a) {
  return numerical_rank(a, tol::rank_rtol(a.rows(), a.cols()));
}

SubspaceBasis left_null_space(const Matrix& a, double rtol) {
  if (rtol <= 0.0) throw InvalidInput("left_null_space: rtol must be positive");
  const auto dec = jacobi_svd(a, Eigen::ComputeFullU);
  const Eigen::Index rank = rank_from_singular_values(dec.singularValues(), rtol);
  SubspaceBasis out;
  out.ambient_dim = a.rows();
  out.tol = rtol;
  out.basis = dec.matrixU().rightCols(a.rows() - rank);
  return out;
}

SubspaceBasis left_null_space(const Matrix& a) {
  return left_null_space(a, tol::rank_rtol(a.rows(), a.cols()));
}

Vector min_norm_lstsq(const Matrix& a, const Vector& b, const Vector& w, double rtol) {
  if (a.rows() != b.size() || a.rows() != w.size())
    throw InvalidInput("min_norm_lstsq: dimension mismatch");
  if ((w.array() <= 0.0).any())
    throw InvalidInput("min_norm_lstsq: weights must be positive");
  const Vector s = w.array().sqrt();
  const Matrix aw = s.asDiagonal() * a;
  const Vector bw = s.asDiagonal() * b;
  const auto dec = jacobi_svd(aw, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = dec.singularValues();
  const Eigen::Index rank = rank_from_singular_values(sigma, rtol);
  const Vector utb = dec.matrixU().leftCols(rank).transpose() * bw;
  Vector coeff(rank);
  for (Eigen::Index i = 0; i < rank; ++i) coeff[i] = utb[i] / sigma[i];
  return dec.matrixV().leftCols(rank) * coeff;
}

Vector min_norm_lstsq(const Matrix& a, const Vector& b, const Vector& w) {
  return min_norm_lstsq(a, b, w, tol::rank_rtol(a.rows(), a.cols()));
}

SubspaceBasis column_space(const Matrix& a, double rtol) {
  const auto dec = jacobi_svd(a, Eigen::ComputeThinU);
  const Eigen::Index rank = rank_from_singular_values(dec.singularValues(), rtol);
  SubspaceBasis out;
  out.ambient_dim = a.rows();
  out.tol = rtol;
  out.basis = dec.matrixU().leftCols(rank);
  return out;
}

double projection_residual(const SubspaceBasis& space, const Vector& v) {
  if (space.ambient_dim != v.size())
    throw InvalidInput("projection_residual: dimension mismatch");
  if (space.basis.cols() == 0) return v.norm();
  const Vector coeff = space.basis.transpose() * v;
  return (v - space.basis * coeff).norm();
}

}  // namespace gradbasis
