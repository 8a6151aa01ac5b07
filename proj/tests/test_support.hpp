#pragma once

// Seeded generators for property tests and the toy problems shared by the
// unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cps/common.hpp"
#include "cps/forward/model.hpp"
#include "cps/prior/denoiser.hpp"
#include "cps/prior/gmm.hpp"
#include "cps/prior/schedule.hpp"
#include "cps/surrogate.hpp"

namespace cps::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  Vector vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }
  Vector uniform_vector(Eigen::Index n, double lo, double hi) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
  Matrix matrix(Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal();
    return m;
  }
  /// Q diag(s) R with singular values in [1, cond].
  Matrix well_conditioned(Eigen::Index r, Eigen::Index c, double cond = 4.0) {
    const Eigen::Index k = std::min(r, c);
    Eigen::HouseholderQR<Matrix> qa(matrix(r, r));
    Eigen::HouseholderQR<Matrix> qb(matrix(c, c));
    Matrix u = qa.householderQ();
    Matrix v = qb.householderQ();
    Matrix s = Matrix::Zero(r, c);
    for (Eigen::Index i = 0; i < k; ++i) s(i, i) = uniform(1.0, cond);
    return u * s * v.transpose();
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double iqr(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(h);
    const double f = h - static_cast<double>(lo);
    return lo + 1 < v.size() ? v[lo] * (1.0 - f) + v[lo + 1] * f : v[lo];
  };
  return q(0.75) - q(0.25);
}

/// Dense surrogate A x + b around the kernel N(mu, sigma^2 I).
inline surrogate::Surrogate dense_surrogate(const Matrix& a, const Vector& b, const Vector& mu,
                                            double sigma) {
  prior::KernelParams k;
  k.mu = mu;
  k.sigma = sigma;
  return surrogate::Surrogate::from_dense(a, b, k);
}

/// Two-mode GMM toy: modes at +-(2.8/sqrt(d)) 1, component std 0.3, equal weights,
/// identity H with sigma_y = 0.05 and y observed at the positive mode.
struct Toy {
  int dim;
  double mode_offset;
  double component_std = 0.3;
  prior::GmmPrior prior;
  prior::DenoiserHandle denoiser;
  prior::DiffusionSchedule schedule;
  forward::ForwardModel model;
  Vector mode;

  Vector observation(int seed) const {
    return forward::synthesize_observation(model, mode, 1000 + static_cast<Seed>(seed));
  }
};

inline prior::GmmPrior toy_prior(int dim, double offset, double std) {
  const Vector m1 = Vector::Constant(dim, offset);
  const Vector var = Vector::Constant(dim, std * std);
  return prior::GmmPrior::diagonal({0.5, 0.5}, {m1, Vector(-m1)}, {var, var});
}

inline Toy make_toy(int dim, int num_steps) {
  const double offset = 2.8 / std::sqrt(static_cast<double>(dim));
  auto gmm = toy_prior(dim, offset, 0.3);
  return Toy{dim,
             offset,
             0.3,
             gmm,
             prior::DenoiserHandle::analytic(gmm),
             prior::build_schedule(num_steps, 1e-4, 0.02, 1.0),
             forward::make_identity(dim, 0.05),
             Vector::Constant(dim, offset)};
}

}  // namespace cps::testing
