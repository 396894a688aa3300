#pragma once

#include "gradbasis/common.hpp"

#include <cstdint>

namespace gradbasis {

/// Deterministic RNG with self-contained transforms. std:: distributions are
/// implementation-defined, so uniform/normal draws are computed here to keep
/// generated data and probes reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {
    // warm up so that small seeds decorrelate
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (both values used, one cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal();
    return m;
  }

  /// Uniform direction on the unit sphere.
  Vector unit_vector(Eigen::Index n) {
    Vector v = normal_vector(n);
    const double nrm = v.norm();
    if (nrm == 0.0) {
      v.setZero();
      v[0] = 1.0;
      return v;
    }
    return v / nrm;
  }

  /// Uniform draw from the closed ball of the given radius.
  Vector in_ball(Eigen::Index n, double radius) {
    const double r = radius * std::pow(uniform(), 1.0 / static_cast<double>(n));
    return r * unit_vector(n);
  }

  /// Derive an independent stream (for per-task splitting).
  Rng split(std::uint64_t stream) {
    return Rng(next_u64() ^ (stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
  }

 private:
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace gradbasis
