#include "cps/prior/schedule.hpp"

#include <cmath>
#include <string>

namespace cps::prior {

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas, double stochasticity)
    : betas_(std::move(betas)), stochasticity_(stochasticity) {
  require(betas_.size() >= 2, ErrorCode::InvalidRange, "schedule needs at least 2 steps");
  require(stochasticity_ >= 0.0 && stochasticity_ <= 1.0, ErrorCode::InvalidRange,
          "stochasticity must lie in [0, 1]");
  alpha_bars_.resize(betas_.size() + 1);
  alpha_bars_[0] = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    const double b = betas_[i];
    require(b > 0.0 && b < 1.0, ErrorCode::InvalidRange,
            "beta_" + std::to_string(i + 1) + " outside (0, 1)");
    alpha_bars_[i + 1] = alpha_bars_[i] * (1.0 - b);
  }
}

double DiffusionSchedule::beta(int t) const {
  require(t >= 1 && t <= num_steps(), ErrorCode::IndexOutOfRange,
          "beta index " + std::to_string(t));
  return betas_[static_cast<std::size_t>(t - 1)];
}

double DiffusionSchedule::alpha_bar(int t) const {
  require(t >= 0 && t <= num_steps(), ErrorCode::IndexOutOfRange,
          "alpha_bar index " + std::to_string(t));
  return alpha_bars_[static_cast<std::size_t>(t)];
}

DiffusionSchedule build_schedule(int num_steps, double beta_min, double beta_max,
                                 double stochasticity) {
  require(num_steps >= 2, ErrorCode::InvalidRange, "num_steps must be >= 2");
  require(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0, ErrorCode::InvalidRange,
          "need 0 < beta_min <= beta_max < 1");
  std::vector<double> betas(static_cast<std::size_t>(num_steps));
  const double span = beta_max - beta_min;
  for (int i = 0; i < num_steps; ++i) {
    betas[static_cast<std::size_t>(i)] =
        beta_min + span * static_cast<double>(i) / static_cast<double>(num_steps - 1);
  }
  return DiffusionSchedule(std::move(betas), stochasticity);
}

KernelParams reverse_kernel(const DiffusionSchedule& schedule, const Vector& x_next,
                            const Vector& x0_hat, int from_step) {
  require(from_step >= 1 && from_step <= schedule.num_steps(), ErrorCode::IndexOutOfRange,
          "reverse_kernel step " + std::to_string(from_step));
  require_same_size(x_next.size(), x0_hat.size(), "reverse_kernel: x_next vs x0_hat");

  const int t = from_step - 1;
  const double ab_t = schedule.alpha_bar(t);
  const double ab_next = schedule.alpha_bar(from_step);
  const double eta = schedule.stochasticity();

  double sigma = 0.0;
  if (eta > 0.0) {
    sigma = eta * std::sqrt((1.0 - ab_t) / (1.0 - ab_next)) * std::sqrt(1.0 - ab_next / ab_t);
  }
  // Rounding can push 1 - ab_t - sigma^2 a hair below zero on the last step.
  const double dir_var = std::max(0.0, 1.0 - ab_t - sigma * sigma);

  KernelParams k;
  k.step_index = t;
  k.sigma = sigma;
  const Vector eps_hat = (x_next - std::sqrt(ab_next) * x0_hat) / std::sqrt(1.0 - ab_next);
  k.mu = std::sqrt(ab_t) * x0_hat + std::sqrt(dir_var) * eps_hat;
  return k;
}

Vector forward_noise(const DiffusionSchedule& schedule, const Vector& x_t, int step_index,
                     Seed rng_seed) {
  require(step_index >= 0 && step_index < schedule.num_steps(), ErrorCode::IndexOutOfRange,
          "forward_noise step " + std::to_string(step_index));
  const double b = schedule.beta(step_index + 1);
  Rng rng(rng_seed);
  const Vector eps = standard_normal(x_t.size(), rng);
  return std::sqrt(1.0 - b) * x_t + std::sqrt(b) * eps;
}

}  // namespace cps::prior
