#pragma once

#include <optional>

#include "cps/common.hpp"
#include "cps/forward/model.hpp"
#include "cps/prior/gmm.hpp"

namespace cps::harness {

struct GaussianMoments {
  Vector mean;
  Matrix covariance;
};

struct PosteriorSummary {
  Vector mean;
  Matrix covariance;
  double mass = 0.0;  // sum of normalized grid weights
  int grid_points = 0;
  std::optional<GaussianMoments> conjugate;  // single-Gaussian priors only
};

/// Affine map recovered by probing: H(x) = matrix * x + offset.
struct AffineMap {
  Matrix matrix;
  Vector offset;
};

AffineMap extract_affine(const forward::ForwardModel& model);

/// Exact posterior N(m, S) for a Gaussian prior N(m0, C0) and y = H x + c + noise.
GaussianMoments conjugate_posterior(const Vector& prior_mean, const Matrix& prior_cov,
                                    const AffineMap& h, const Vector& y, double sigma_y);

/// Grid quadrature of p(x) N(y; H x, sigma_y^2 I) over mean +- 6 marginal std of the
/// prior, `grid_points` nodes per axis. d <= 3 and linear models only.
PosteriorSummary brute_force_posterior(const prior::GmmPrior& prior,
                                       const forward::ForwardModel& model, const Vector& y,
                                       int grid_points);

/// Per-axis node count used when a config does not give one.
int default_grid_points(int dim);

}  // namespace cps::harness
