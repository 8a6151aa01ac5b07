#include "cps/harness/oracle.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace cps::harness {

namespace {

constexpr double kHalfWidth = 6.0;
constexpr int kMaxDim = 3;

}  // namespace

AffineMap extract_affine(const forward::ForwardModel& model) {
  const int d = model.input_dim();
  AffineMap h;
  h.offset = model(Vector::Zero(d));
  h.matrix.resize(model.output_dim(), d);
  for (int i = 0; i < d; ++i) {
    h.matrix.col(i) = model(Vector::Unit(d, i)) - h.offset;
  }
  return h;
}

GaussianMoments conjugate_posterior(const Vector& prior_mean, const Matrix& prior_cov,
                                    const AffineMap& h, const Vector& y, double sigma_y) {
  require_same_size(prior_cov.rows(), prior_mean.size(), "conjugate posterior: covariance");
  require_same_size(h.matrix.cols(), prior_mean.size(), "conjugate posterior: H columns");
  require_same_size(h.matrix.rows(), y.size(), "conjugate posterior: H rows");
  require(sigma_y > 0.0, ErrorCode::InvalidArgument, "conjugate posterior needs sigma_y > 0");
  // Information form; precision = C0^-1 + H^T H / s^2.
  const Eigen::LLT<Matrix> c0(prior_cov);
  require(c0.info() == Eigen::Success, ErrorCode::InvalidArgument,
          "prior covariance is not positive definite");
  const Matrix c0_inv = c0.solve(Matrix::Identity(prior_mean.size(), prior_mean.size()));
  const double w = 1.0 / (sigma_y * sigma_y);
  const Matrix precision = c0_inv + w * h.matrix.transpose() * h.matrix;
  const Eigen::LLT<Matrix> p(precision);
  GaussianMoments out;
  out.covariance = p.solve(Matrix::Identity(prior_mean.size(), prior_mean.size()));
  out.mean = p.solve(c0_inv * prior_mean + w * h.matrix.transpose() * (y - h.offset));
  return out;
}

int default_grid_points(int dim) {
  switch (dim) {
    case 1:
      return 2001;
    case 2:
      return 401;
    default:
      return 81;
  }
}

PosteriorSummary brute_force_posterior(const prior::GmmPrior& prior,
                                       const forward::ForwardModel& model, const Vector& y,
                                       int grid_points) {
  const int d = prior.dim();
  require(d >= 1 && d <= kMaxDim, ErrorCode::DimensionMismatch,
          "brute-force posterior supports d <= 3, got d = " + std::to_string(d));
  require(model.is_linear(), ErrorCode::NonlinearOperator,
          std::string("brute-force posterior needs a linear operator, got ") +
              forward::to_string(model.kind()));
  require_same_size(model.input_dim(), d, "brute-force posterior: model vs prior dim");
  require_same_size(model.output_dim(), y.size(), "brute-force posterior: observation");
  require(grid_points >= 2, ErrorCode::InvalidArgument, "grid needs at least 2 points per axis");
  require(model.sigma_y() > 0.0, ErrorCode::InvalidArgument, "oracle needs sigma_y > 0");

  const AffineMap h = extract_affine(model);
  const Vector centre = prior.mean();
  const Vector half = kHalfWidth * prior.marginal_variance().cwiseSqrt();
  const Vector lo = centre - half;
  const Vector step = 2.0 * half / static_cast<double>(grid_points - 1);

  long long total = 1;
  for (int i = 0; i < d; ++i) total *= grid_points;

  // Log weights first, then normalize against the maximum.
  std::vector<double> logw(static_cast<std::size_t>(total));
  const double inv2s2 = 1.0 / (2.0 * model.sigma_y() * model.sigma_y());
  Vector x(d);
  double maxlog = -std::numeric_limits<double>::infinity();
  for (long long flat = 0; flat < total; ++flat) {
    long long rem = flat;
    for (int i = 0; i < d; ++i) {
      x[i] = lo[i] + step[i] * static_cast<double>(rem % grid_points);
      rem /= grid_points;
    }
    const double lw =
        prior.log_density(x) - inv2s2 * (y - h.matrix * x - h.offset).squaredNorm();
    logw[static_cast<std::size_t>(flat)] = lw;
    if (lw > maxlog) maxlog = lw;
  }
  require(std::isfinite(maxlog), ErrorCode::InvalidArgument,
          "posterior has no finite mass on the grid");

  double z = 0.0;
  for (double& lw : logw) {
    lw = std::exp(lw - maxlog);
    z += lw;
  }

  PosteriorSummary out;
  out.grid_points = grid_points;
  out.mean = Vector::Zero(d);
  out.covariance = Matrix::Zero(d, d);
  double mass = 0.0;
  for (long long flat = 0; flat < total; ++flat) {
    long long rem = flat;
    for (int i = 0; i < d; ++i) {
      x[i] = lo[i] + step[i] * static_cast<double>(rem % grid_points);
      rem /= grid_points;
    }
    const double w = logw[static_cast<std::size_t>(flat)] / z;
    mass += w;
    out.mean += w * x;
    out.covariance += w * x * x.transpose();
  }
  out.mass = mass;
  out.covariance -= out.mean * out.mean.transpose();

  if (prior.size() == 1) {
    out.conjugate = conjugate_posterior(prior.components()[0].mean, prior.covariance(0), h, y,
                                        model.sigma_y());
  }
  return out;
}

}  // namespace cps::harness
