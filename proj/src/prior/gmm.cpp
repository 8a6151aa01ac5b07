#include "cps/prior/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

namespace cps::prior {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_common(const std::vector<double>& weights, const std::vector<Vector>& means,
                  std::size_t n_cov) {
  require(!weights.empty(), ErrorCode::InvalidArgument, "GMM needs at least one component");
  require(weights.size() == means.size() && weights.size() == n_cov,
          ErrorCode::DimensionMismatch, "GMM weights/means/covariances counts differ");
  const auto d = means.front().size();
  require(d > 0, ErrorCode::DimensionMismatch, "GMM dimension must be positive");
  for (const auto& m : means) require_same_size(m.size(), d, "GMM component mean");
}

}  // namespace

void GmmPrior::validate_weights() const {
  double total = 0.0;
  for (const auto& c : components_) {
    require(c.weight >= 0.0 && std::isfinite(c.weight), ErrorCode::InvalidArgument,
            "GMM weights must be finite and nonnegative");
    total += c.weight;
  }
  require(std::abs(total - 1.0) <= 1e-12, ErrorCode::InvalidArgument,
          "GMM weights must sum to 1 (got " + std::to_string(total) + ")");
}

GmmPrior GmmPrior::diagonal(std::vector<double> weights, std::vector<Vector> means,
                            std::vector<Vector> variances) {
  check_common(weights, means, variances.size());
  GmmPrior p;
  p.dim_ = static_cast<int>(means.front().size());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    require_same_size(variances[k].size(), p.dim_, "GMM component variance");
    require((variances[k].array() > 0.0).all() && variances[k].allFinite(),
            ErrorCode::InvalidArgument, "GMM variances must be positive");
    p.components_.push_back({weights[k], std::move(means[k]), std::move(variances[k]), Matrix()});
  }
  p.validate_weights();
  return p;
}

GmmPrior GmmPrior::full(std::vector<double> weights, std::vector<Vector> means,
                        std::vector<Matrix> covariances) {
  check_common(weights, means, covariances.size());
  GmmPrior p;
  p.dim_ = static_cast<int>(means.front().size());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const Matrix& c = covariances[k];
    require(c.rows() == p.dim_ && c.cols() == p.dim_, ErrorCode::DimensionMismatch,
            "GMM covariance shape");
    const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    require((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
            ErrorCode::InvalidArgument, "GMM covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
    require(eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > 0.0,
            ErrorCode::InvalidArgument, "GMM covariance not positive definite");
    p.components_.push_back({weights[k], std::move(means[k]), eig.eigenvalues(),
                             eig.eigenvectors()});
  }
  p.validate_weights();
  return p;
}

GmmPrior GmmPrior::isotropic_gaussian(Vector mean, double variance) {
  const auto d = mean.size();
  return diagonal({1.0}, {std::move(mean)}, {Vector::Constant(d, variance)});
}

Vector GmmPrior::posterior_mean(const Vector& x_t, double alpha_bar) const {
  require_same_size(x_t.size(), dim_, "denoise input vs prior dimension");
  require(alpha_bar > 0.0 && alpha_bar <= 1.0, ErrorCode::InvalidRange,
          "alpha_bar must lie in (0, 1]");
  const double sa = std::sqrt(alpha_bar);
  const double noise_var = 1.0 - alpha_bar;

  const std::size_t K = components_.size();
  std::vector<double> log_w(K);
  std::vector<Vector> cond_means(K);

  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = components_[k];
    // Marginal of x_t under component k: N(sa m, alpha_bar C + (1 - alpha_bar) I).
    const Vector shifted = x_t - sa * c.mean;
    const Vector z = c.basis.size() == 0 ? shifted : Vector(c.basis.transpose() * shifted);
    const Eigen::ArrayXd s = alpha_bar * c.eigenvalues.array() + noise_var;
    log_w[k] = std::log(c.weight) - 0.5 * (z.array().square() / s).sum() -
               0.5 * s.log().sum() - 0.5 * static_cast<double>(dim_) * kLog2Pi;
    const Vector gain = (sa * c.eigenvalues.array() * z.array() / s).matrix();
    cond_means[k] = c.mean + (c.basis.size() == 0 ? gain : Vector(c.basis * gain));
  }

  // Responsibilities in log space with max subtraction.
  double max_lw = -std::numeric_limits<double>::infinity();
  for (double lw : log_w) max_lw = std::max(max_lw, lw);
  Vector out = Vector::Zero(dim_);
  double norm = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double w = std::exp(log_w[k] - max_lw);
    norm += w;
    out += w * cond_means[k];
  }
  return out / norm;
}

double GmmPrior::log_density(const Vector& x) const {
  require_same_size(x.size(), dim_, "log_density input");
  double max_l = -std::numeric_limits<double>::infinity();
  std::vector<double> l(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const Vector shifted = x - c.mean;
    const Vector z = c.basis.size() == 0 ? shifted : Vector(c.basis.transpose() * shifted);
    l[k] = std::log(c.weight) - 0.5 * (z.array().square() / c.eigenvalues.array()).sum() -
           0.5 * c.eigenvalues.array().log().sum() - 0.5 * static_cast<double>(dim_) * kLog2Pi;
    max_l = std::max(max_l, l[k]);
  }
  double acc = 0.0;
  for (double v : l) acc += std::exp(v - max_l);
  return max_l + std::log(acc);
}

Vector GmmPrior::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  std::size_t k = 0;
  double cum = 0.0;
  for (; k + 1 < components_.size(); ++k) {
    cum += components_[k].weight;
    if (u < cum) break;
  }
  const auto& c = components_[k];
  const Vector eps = standard_normal(dim_, rng);
  const Vector scaled = (c.eigenvalues.array().sqrt() * eps.array()).matrix();
  return c.mean + (c.basis.size() == 0 ? scaled : Vector(c.basis * scaled));
}

Vector GmmPrior::mean() const {
  Vector m = Vector::Zero(dim_);
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

Vector GmmPrior::marginal_variance() const {
  const Vector m = mean();
  Vector v = Vector::Zero(dim_);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    Vector var_k = c.basis.size() == 0
                       ? c.eigenvalues
                       : Vector((c.basis.array().square().matrix() * c.eigenvalues));
    v += c.weight * (var_k.array() + (c.mean - m).array().square()).matrix();
  }
  return v;
}

Matrix GmmPrior::covariance(int component) const {
  require(component >= 0 && component < size(), ErrorCode::IndexOutOfRange,
          "GMM component index");
  const auto& c = components_[static_cast<std::size_t>(component)];
  if (c.basis.size() == 0) return c.eigenvalues.asDiagonal();
  return c.basis * c.eigenvalues.asDiagonal() * c.basis.transpose();
}

}  // namespace cps::prior
