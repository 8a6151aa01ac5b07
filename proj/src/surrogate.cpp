#include "cps/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace cps::surrogate {

namespace {

bool column_less(const Matrix& a, const Matrix& b, Eigen::Index i, Eigen::Index j) {
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    if (a(r, i) != a(r, j)) return a(r, i) < a(r, j);
  }
  for (Eigen::Index r = 0; r < b.rows(); ++r) {
    if (b(r, i) != b(r, j)) return b(r, i) < b(r, j);
  }
  return false;
}

// Row means with compensated summation, shifted by the first column so that a
// constant row yields its constant exactly.
Vector kahan_row_mean(const Matrix& m) {
  Vector out(m.rows());
  const double n = static_cast<double>(m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double shift = m(r, 0);
    double sum = 0.0;
    double comp = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double y = (m(r, c) - shift) - comp;
      const double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
    out[r] = shift + sum / n;
  }
  return out;
}

// Columns of (x, h) reordered lexicographically, so that every later
// reduction is independent of the order particles arrived in.
void canonical_order(const Matrix& x, const Matrix& h, Matrix& xs, Matrix& hs) {
  const auto n = x.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return column_less(x, h, i, j); });
  xs.resize(x.rows(), n);
  hs.resize(h.rows(), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    xs.col(c) = x.col(order[static_cast<std::size_t>(c)]);
    hs.col(c) = h.col(order[static_cast<std::size_t>(c)]);
  }
}

}  // namespace

ParticleBatch::ParticleBatch(Matrix particles, Matrix values, KernelParams kernel)
    : particles_(std::move(particles)), values_(std::move(values)), kernel_(std::move(kernel)) {
  require(particles_.cols() >= 2, ErrorCode::InvalidArgument,
          "particle batch needs n >= 2 particles");
  require_same_size(values_.cols(), particles_.cols(), "particle batch: values vs particles");
  require_same_size(kernel_.mu.size(), particles_.rows(), "particle batch: kernel mean vs particles");
  require(values_.rows() >= 1, ErrorCode::DimensionMismatch, "particle batch: empty values");
}

Matrix draw_from_kernel(const KernelParams& kernel, int n, Seed rng_seed) {
  require(n >= 1, ErrorCode::InvalidArgument, "need at least one draw");
  require(kernel.sigma >= 0.0, ErrorCode::DegenerateKernel, "negative kernel sigma");
  Rng rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = kernel.mu.size();
  Matrix out(d, n);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out(j, i) = kernel.mu[j] + kernel.sigma * normal(rng);
  }
  return out;
}

Matrix sample_candidates(const KernelParams& kernel, int n, Seed rng_seed) {
  require(n >= 2, ErrorCode::InvalidArgument, "need n >= 2 candidates");
  require(kernel.sigma > 0.0, ErrorCode::DegenerateKernel,
          "kernel sigma is zero; constraint sphere collapses");
  return draw_from_kernel(kernel, n, rng_seed);
}

Surrogate Surrogate::from_dense(Matrix a, Vector b, KernelParams kernel) {
  require_same_size(a.cols(), kernel.mu.size(), "dense surrogate: A cols vs mu");
  require_same_size(a.rows(), b.size(), "dense surrogate: A rows vs b");
  Surrogate s;
  s.h_bar_ = a * kernel.mu + b;
  s.dense_ = std::move(a);
  s.b_ = std::move(b);
  s.kernel_ = std::move(kernel);
  return s;
}

Vector Surrogate::apply(const Vector& v) const {
  require_same_size(v.size(), cols(), "surrogate apply");
  if (!matrix_free()) return dense_ * v;
  return scale_ * (value_dev_ * (particle_dev_.transpose() * v));
}

Vector Surrogate::apply_transpose(const Vector& r) const {
  require_same_size(r.size(), rows(), "surrogate apply_transpose");
  if (!matrix_free()) return dense_.transpose() * r;
  return scale_ * (particle_dev_ * (value_dev_.transpose() * r));
}

Matrix Surrogate::dense() const {
  if (!matrix_free()) return dense_;
  return scale_ * value_dev_ * particle_dev_.transpose();
}

double Surrogate::frobenius_norm() const {
  if (!matrix_free()) return dense_.norm();
  const double m = static_cast<double>(value_dev_.rows());
  const double d = static_cast<double>(particle_dev_.rows());
  const double n = static_cast<double>(value_dev_.cols());
  if (m * d <= n * (m + d)) return std::abs(scale_) * (value_dev_ * particle_dev_.transpose()).norm();
  // ||s V P^T||_F^2 = s^2 tr((V^T V)(P^T P))
  const Matrix gv = value_dev_.transpose() * value_dev_;
  const Matrix gp = particle_dev_.transpose() * particle_dev_;
  const double tr = (gv.cwiseProduct(gp)).sum();
  return std::abs(scale_) * std::sqrt(std::max(0.0, tr));
}

Surrogate fit_surrogate(const ParticleBatch& batch) {
  const auto& k = batch.kernel();
  require(k.sigma > 0.0, ErrorCode::DegenerateKernel, "fit_surrogate needs sigma > 0");
  const int n = batch.size();
  Matrix xs;
  Matrix hs;
  canonical_order(batch.particles(), batch.values(), xs, hs);

  Surrogate s;
  s.kernel_ = k;
  s.h_bar_ = kahan_row_mean(hs);
  s.value_dev_ = hs.colwise() - s.h_bar_;
  s.particle_dev_ = xs.colwise() - k.mu;
  s.scale_ = 1.0 / (static_cast<double>(n) * k.sigma * k.sigma);
  s.b_ = s.h_bar_ - s.apply(k.mu);
  return s;
}

double jensen_gap(const ParticleBatch& batch, const Surrogate& surrogate) {
  require_same_size(surrogate.cols(), batch.dim(), "jensen_gap: surrogate vs batch dim");
  require_same_size(surrogate.rows(), batch.out_dim(), "jensen_gap: surrogate vs batch out dim");
  // A x_i + b = A (x_i - mu) + h_bar; all residuals in one product.
  Matrix xs;
  Matrix hs;
  canonical_order(batch.particles(), batch.values(), xs, hs);
  const Matrix dev = xs.colwise() - surrogate.kernel().mu;
  Matrix pred;
  const double m = batch.out_dim();
  const double d = batch.dim();
  const double n = batch.size();
  if (!surrogate.matrix_free() || m * d <= n * (m + d)) {
    pred = surrogate.dense() * dev;
  } else {
    pred = surrogate.scale_ * (surrogate.value_dev_ * (surrogate.particle_dev_.transpose() * dev));
  }
  pred.colwise() += surrogate.h_bar();
  return (hs - pred).cwiseAbs().sum() / (n * m);
}

}  // namespace cps::surrogate
