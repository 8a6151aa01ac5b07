#pragma once

#include "cps/common.hpp"
#include "cps/prior/schedule.hpp"

namespace cps::surrogate {

using prior::KernelParams;

/// n particles drawn from one reverse kernel together with the forward-model
/// values of their one-step clean estimates. Particles and values are stored
/// column-wise (d x n and m x n).
class ParticleBatch {
 public:
  ParticleBatch(Matrix particles, Matrix values, KernelParams kernel);

  int size() const { return static_cast<int>(particles_.cols()); }
  int dim() const { return static_cast<int>(particles_.rows()); }
  int out_dim() const { return static_cast<int>(values_.rows()); }
  const Matrix& particles() const { return particles_; }
  const Matrix& values() const { return values_; }
  const KernelParams& kernel() const { return kernel_; }

 private:
  Matrix particles_;
  Matrix values_;
  KernelParams kernel_;
};

/// n draws mu + sigma * eps as the columns of a d x n matrix. Allows n = 1 and
/// sigma = 0 (every column equals mu); the sampler uses it for ancestral steps.
Matrix draw_from_kernel(const KernelParams& kernel, int n, Seed rng_seed);

/// Candidate particles for surrogate fitting: n >= 2 and sigma > 0.
Matrix sample_candidates(const KernelParams& kernel, int n, Seed rng_seed);

/// Local affine model h(x) ~ A x + b of x_t -> H(x0_hat(x_t)).
///
/// A fitted surrogate keeps A in factored form
///   A = scale * V * P^T,  V = value deviations (m x n), P = particle deviations (d x n)
/// and only materializes the dense m x d matrix on request.
class Surrogate {
 public:
  /// Dense surrogate with h_bar = A mu + b. Used by solvers' tests and tools.
  static Surrogate from_dense(Matrix a, Vector b, KernelParams kernel);

  int rows() const { return static_cast<int>(b_.size()); }
  int cols() const { return static_cast<int>(kernel_.mu.size()); }
  bool matrix_free() const { return dense_.size() == 0; }

  Vector apply(const Vector& v) const;
  Vector apply_transpose(const Vector& r) const;
  Matrix dense() const;
  double frobenius_norm() const;

  const Vector& b() const { return b_; }
  const Vector& h_bar() const { return h_bar_; }
  const KernelParams& kernel() const { return kernel_; }

 private:
  friend Surrogate fit_surrogate(const ParticleBatch& batch);
  friend double jensen_gap(const ParticleBatch& batch, const Surrogate& surrogate);
  Surrogate() = default;

  Matrix dense_;
  double scale_ = 0.0;
  Matrix value_dev_;
  Matrix particle_dev_;
  Vector b_;
  Vector h_bar_;
  KernelParams kernel_;
};

/// Statistical linearization from known kernel moments:
///   A = 1/(n sigma^2) sum_i (h_i - h_bar)(x_i - mu)^T,  b = h_bar - A mu.
/// Exactly invariant to the order of particles in the batch.
Surrogate fit_surrogate(const ParticleBatch& batch);

/// Mean absolute residual of the affine fit over the batch,
/// 1/(n m) sum_ij |h_ij - (A x_i + b)_j|.
double jensen_gap(const ParticleBatch& batch, const Surrogate& surrogate);

}  // namespace cps::surrogate
