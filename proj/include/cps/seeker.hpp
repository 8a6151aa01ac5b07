#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cps/common.hpp"
#include "cps/surrogate.hpp"

namespace cps::seeker {

using surrogate::KernelParams;
using surrogate::Surrogate;

struct NewtonIterate {
  double lambda = 0.0;
  double radius_sq = 0.0;  // ||x(lambda) - mu||^2
};

/// Solution of  min ||y - (A x + b)||^2  s.t.  ||x - mu|| = sigma sqrt(d).
struct SeekResult {
  Vector x_star;
  /// Lagrange multiplier; absent for the asymptotic closed form. Negative only
  /// when `interior` is set (the unconstrained minimizer lies inside the sphere).
  std::optional<double> lambda;
  double objective = 0.0;
  double constraint_residual = 0.0;  // | ||x* - mu||^2 - sigma^2 d |
  bool interior = false;
  /// Interior case on a problem too large for the dense eigen route: x* is the
  /// radial projection of the unconstrained minimizer, not the exact optimum.
  bool approximate = false;
  std::vector<NewtonIterate> iterates;
};

/// Closed form for small sigma:
///   x* = mu + sigma sqrt(d) A^T (y - h_bar) / ||A^T (y - h_bar)||.
/// Throws Error(ZeroGradient) when ||A^T (y - h_bar)|| <= 1e-12 ||y - h_bar|| ||A||_F.
SeekResult seek_asymptotic(const Surrogate& surrogate, const Vector& y, int d);

struct ExactOptions {
  double tol = 1e-10;        // on |r(lambda) - sigma^2 d| / (sigma^2 d)
  int max_newton = 100;
  double cg_rel_tol = 1e-10;
  int cg_max_iter = 0;       // 0: 2 d + 50
  int dense_limit = 1024;    // largest d handled by the eigen route in the interior case
};

/// Lagrange solution via Krylov solves of (A^T A + lambda I) x = A^T (y - b) + lambda mu
/// and safeguarded Newton on the secular equation in lambda.
SeekResult seek_exact(const Surrogate& surrogate, const Vector& y, int d, double tol,
                      int max_newton);
SeekResult seek_exact(const Surrogate& surrogate, const Vector& y, int d,
                      const ExactOptions& options);

/// Uniform draw on S^{d-1}(mu, sigma sqrt(d)); the zero-gradient fallback.
Vector sphere_draw(const KernelParams& kernel, Seed rng_seed);

/// Objective ||y - (A x + b)||^2 evaluated through the surrogate.
double surrogate_objective(const Surrogate& surrogate, const Vector& y, const Vector& x);

/// Index of the smallest cost; ties go to the lowest index. NaN is rejected.
std::size_t scg_select(std::span<const double> costs);

}  // namespace cps::seeker
