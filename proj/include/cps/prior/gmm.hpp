#pragma once

#include <vector>

#include "cps/common.hpp"

namespace cps::prior {

/// Gaussian mixture prior over clean signals.
///
/// Covariances are stored through their eigendecomposition C = U diag(lambda) U^T
/// so that every noise level shares one factorization. Diagonal components
/// keep U empty and never touch a d x d matrix, which is what makes
/// 128 x 128 fields practical.
class GmmPrior {
 public:
  struct Component {
    double weight = 0.0;
    Vector mean;
    Vector eigenvalues;  // lambda
    Matrix basis;        // U, empty for diagonal components
  };

  /// Components with diagonal covariance given by per-coordinate variances.
  static GmmPrior diagonal(std::vector<double> weights, std::vector<Vector> means,
                           std::vector<Vector> variances);
  /// Components with dense symmetric positive-definite covariances.
  static GmmPrior full(std::vector<double> weights, std::vector<Vector> means,
                       std::vector<Matrix> covariances);
  static GmmPrior isotropic_gaussian(Vector mean, double variance);

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(components_.size()); }
  const std::vector<Component>& components() const { return components_; }

  /// E[x0 | x_t] under x_t = sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps.
  Vector posterior_mean(const Vector& x_t, double alpha_bar) const;

  double log_density(const Vector& x) const;
  Vector sample(Rng& rng) const;

  Vector mean() const;
  /// Per-coordinate variance of the mixture (diagonal of its covariance).
  Vector marginal_variance() const;
  Matrix covariance(int component) const;

 private:
  GmmPrior() = default;
  void validate_weights() const;

  int dim_ = 0;
  std::vector<Component> components_;
};

}  // namespace cps::prior
