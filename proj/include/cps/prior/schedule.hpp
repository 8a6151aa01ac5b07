#pragma once

#include <span>
#include <vector>

#include "cps/common.hpp"

namespace cps::prior {

/// Discrete variance-preserving noise schedule.
///
/// Step indices run 0..T with 0 the clean data. `beta(t)` is defined for
/// t in [1, T]; `alpha_bar(t)` for t in [0, T] with alpha_bar(0) = 1.
class DiffusionSchedule {
 public:
  DiffusionSchedule(std::vector<double> betas, double stochasticity);

  int num_steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const;
  double alpha_bar(int t) const;
  double stochasticity() const { return stochasticity_; }

  std::span<const double> betas() const { return betas_; }
  /// alpha_bar(1..T); alpha_bar(0) = 1 is implicit.
  std::span<const double> alpha_bars() const {
    return std::span<const double>(alpha_bars_).subspan(1);
  }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;  // index 0..T
  double stochasticity_;
};

/// Linear beta ramp from beta_min to beta_max over num_steps.
DiffusionSchedule build_schedule(int num_steps, double beta_min, double beta_max,
                                 double stochasticity = 1.0);

/// Isotropic Gaussian reverse transition N(mu, sigma^2 I) targeting step
/// `step_index`.
struct KernelParams {
  Vector mu;
  double sigma = 0.0;
  int step_index = 0;
};

/// DDIM transition from the state at `from_step` (in [1, T]) to step
/// from_step - 1, given the one-step clean estimate of the state.
KernelParams reverse_kernel(const DiffusionSchedule& schedule, const Vector& x_next,
                            const Vector& x0_hat, int from_step);

/// One forward (noising) step: returns x_{t+1} given x_t, t in [0, T-1].
Vector forward_noise(const DiffusionSchedule& schedule, const Vector& x_t, int step_index,
                     Seed rng_seed);

}  // namespace cps::prior
