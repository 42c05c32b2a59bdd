#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "mixgw/mixgw.hpp"

namespace testing_support {

using mixgw::Gaussian;
using mixgw::Gmm;
using mixgw::Matrix;
using mixgw::Vector;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  Vector normal_vector(Eigen::Index d, double scale = 1.0) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = scale * normal();
    return v;
  }

  Matrix normal_matrix(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * normal();
    }
    return m;
  }

  // Well-conditioned SPD matrix: A A^T / d + floor * I.
  Matrix spd(Eigen::Index d, double scale = 1.0, double floor = 0.1) {
    const Matrix a = normal_matrix(d, d);
    return mixgw::linalg::symmetrize(scale * (a * a.transpose() / static_cast<double>(d) + floor * Matrix::Identity(d, d)));
  }

  // Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-corrected).
  Matrix orthogonal(Eigen::Index d) {
    const Matrix a = normal_matrix(d, d);
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < d; ++i) {
      if (r(i, i) < 0.0) q.col(i) = -q.col(i);
    }
    return q;
  }

  Matrix stiefel(Eigen::Index d, Eigen::Index dp) { return orthogonal(d).leftCols(dp); }

  Vector simplex(Eigen::Index k) {
    Vector w(k);
    for (Eigen::Index i = 0; i < k; ++i) w(i) = 0.5 + uniform();
    return w / w.sum();
  }

  Gaussian gaussian(Eigen::Index d, double mean_scale = 1.0, double cov_scale = 1.0) {
    return Gaussian(normal_vector(d, mean_scale), spd(d, cov_scale));
  }

  Gmm gmm(Eigen::Index k, Eigen::Index d, double mean_scale = 3.0, double cov_scale = 0.3) {
    std::vector<Gaussian> cs;
    for (Eigen::Index i = 0; i < k; ++i) cs.push_back(gaussian(d, mean_scale, cov_scale));
    return Gmm(simplex(k), cs);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Gmm single(const Gaussian& g) { return Gmm(Vector::Ones(1), {g}); }

inline double rel_err(double got, double want, double floor = 1e-300) {
  return std::abs(got - want) / std::max(std::abs(want), floor);
}

}  // namespace testing_support
