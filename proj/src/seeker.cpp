#include "cps/seeker.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

namespace cps::seeker {

namespace {

struct Problem {
  Vector residual;  // y - h_bar
  Vector grad;      // A^T (y - h_bar)
  double radius = 0.0;
  double radius_sq = 0.0;
};

Problem setup(const Surrogate& s, const Vector& y, int d) {
  require_same_size(d, s.cols(), "seek: d vs surrogate columns");
  require_same_size(y.size(), s.rows(), "seek: y vs surrogate rows");
  const double sigma = s.kernel().sigma;
  require(sigma > 0.0, ErrorCode::DegenerateKernel, "seek needs sigma > 0");
  Problem p;
  p.residual = y - s.h_bar();
  p.grad = s.apply_transpose(p.residual);
  p.radius_sq = sigma * sigma * static_cast<double>(d);
  p.radius = sigma * std::sqrt(static_cast<double>(d));
  const double eps_dir = 1e-12 * p.residual.norm() * s.frobenius_norm();
  if (!(p.grad.norm() > eps_dir)) {
    fail(ErrorCode::ZeroGradient, "||A^T (y - h_bar)|| = " + std::to_string(p.grad.norm()) +
                                      " below threshold " + std::to_string(eps_dir));
  }
  return p;
}

SeekResult finish(const Surrogate& s, const Problem& p, const Vector& step) {
  SeekResult out;
  const Vector& mu = s.kernel().mu;
  out.x_star = mu + step;
  out.objective = (p.residual - s.apply(step)).squaredNorm();
  out.constraint_residual = std::abs((out.x_star - mu).squaredNorm() - p.radius_sq);
  return out;
}

Vector conjugate_gradient(const std::function<Vector(const Vector&)>& op, const Vector& rhs,
                          Vector x, double rel_tol, int max_iter) {
  Vector r = rhs - op(x);
  Vector p = r;
  double rs = r.squaredNorm();
  const double target = rel_tol * rel_tol * rhs.squaredNorm();
  if (rs <= target) return x;
  for (int it = 0; it < max_iter; ++it) {
    const Vector ap = op(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double alpha = rs / pap;
    x += alpha * p;
    r -= alpha * ap;
    const double rs_new = r.squaredNorm();
    if (rs_new <= target) return x;
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  fail(ErrorCode::SolverDivergence,
       "CG did not reach relative tolerance " + std::to_string(rel_tol) + " in " +
           std::to_string(max_iter) + " iterations");
}

// Exact solution of the equality-constrained problem on the full multiplier
// range lambda > -e_min, through the eigendecomposition of A^T A. Handles the
// interior case and the hard case.
SeekResult eigen_route(const Surrogate& s, const Problem& p, std::vector<NewtonIterate> iterates) {
  const Matrix a = s.dense();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a.transpose() * a);
  require(eig.info() == Eigen::Success, ErrorCode::SolverDivergence, "eigensolver failed");
  const Vector e = eig.eigenvalues();  // ascending
  const Matrix& q = eig.eigenvectors();
  const Vector c = q.transpose() * p.grad;
  const Eigen::Index n = e.size();
  const double e_min = e[0];
  const double e_tol = 1e-12 * std::max(std::abs(e[n - 1]), 1e-300);
  const double c_tol = 1e-12 * p.grad.norm();

  auto radius_sq = [&](double lambda) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double den = e[i] + lambda;
      if (den > 0.0) acc += c[i] * c[i] / (den * den);
    }
    return acc;
  };
  auto step_at = [&](double lambda) {
    Vector coef = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double den = e[i] + lambda;
      if (den > 0.0) coef[i] = c[i] / den;
    }
    return Vector(q * coef);
  };

  Eigen::Index n_min = 0;
  while (n_min < n && e[n_min] <= e_min + e_tol) ++n_min;
  bool hard = true;
  for (Eigen::Index i = 0; i < n_min; ++i) hard = hard && std::abs(c[i]) <= c_tol;

  double lambda = 0.0;
  Vector step;
  Vector base = Vector::Zero(n);
  for (Eigen::Index i = n_min; i < n; ++i) base[i] = c[i] / (e[i] - e_min);
  if (hard && base.squaredNorm() <= p.radius_sq) {
    // Gradient has no component on the bottom eigenspace: fill the sphere
    // along the first bottom eigenvector.
    lambda = -e_min;
    base[0] = std::sqrt(std::max(0.0, p.radius_sq - base.squaredNorm()));
    step = q * base;
  } else {
    double lo = -e_min;
    double hi = p.grad.norm() / p.radius - e_min;
    lambda = hi;
    for (int it = 0; it < 500; ++it) {
      const double r = radius_sq(lambda);
      iterates.push_back({lambda, r});
      if (std::abs(r - p.radius_sq) <= 1e-15 * p.radius_sq) break;
      if (r > p.radius_sq) lo = lambda; else hi = lambda;
      double cubic = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double den = e[i] + lambda;
        if (den > 0.0) cubic += c[i] * c[i] / (den * den * den);
      }
      double next = lambda + (r / cubic) * (std::sqrt(r) - p.radius) / p.radius;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (next == lambda || hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::abs(hi)) {
        break;
      }
      lambda = next;
    }
    step = step_at(lambda);
  }

  step *= p.radius / step.norm();
  SeekResult out = finish(s, p, step);
  out.lambda = lambda;
  out.interior = lambda <= 0.0;
  out.iterates = std::move(iterates);
  return out;
}

}  // namespace

SeekResult seek_asymptotic(const Surrogate& surrogate, const Vector& y, int d) {
  const Problem p = setup(surrogate, y, d);
  return finish(surrogate, p, (p.radius / p.grad.norm()) * p.grad);
}

SeekResult seek_exact(const Surrogate& surrogate, const Vector& y, int d, double tol,
                      int max_newton) {
  ExactOptions opt;
  opt.tol = tol;
  opt.max_newton = max_newton;
  return seek_exact(surrogate, y, d, opt);
}

SeekResult seek_exact(const Surrogate& surrogate, const Vector& y, int d,
                      const ExactOptions& options) {
  require(options.tol > 0.0, ErrorCode::InvalidArgument, "seek_exact tol must be positive");
  require(options.max_newton >= 1, ErrorCode::InvalidArgument, "seek_exact max_newton >= 1");
  const Problem p = setup(surrogate, y, d);
  const int cg_max = options.cg_max_iter > 0 ? options.cg_max_iter : 2 * d + 50;

  auto solve = [&](double lambda, const Vector& rhs, const Vector& warm) {
    return conjugate_gradient(
        [&](const Vector& v) {
          return Vector(surrogate.apply_transpose(surrogate.apply(v)) + lambda * v);
        },
        rhs, warm, options.cg_rel_tol, cg_max);
  };

  std::vector<NewtonIterate> iterates;
  const double target = p.radius_sq;

  // ||(A^T A + lambda I)^{-1} g|| <= ||g|| / lambda, so this lambda is already
  // an upper bracket; doubling only absorbs CG inexactness.
  double hi = p.grad.norm() / p.radius;
  Vector z = solve(hi, p.grad, Vector::Zero(d));
  double r = z.squaredNorm();
  iterates.push_back({hi, r});
  for (int k = 0; r > target && k < 60; ++k) {
    hi *= 2.0;
    z = solve(hi, p.grad, z);
    r = z.squaredNorm();
    iterates.push_back({hi, r});
  }
  double lo = 0.0;
  bool found_outside = false;  // some lambda with r(lambda) > target seen
  double lambda = hi;

  for (int k = 0; k < options.max_newton; ++k) {
    if (std::abs(r - target) <= options.tol * target) break;
    const Vector w = solve(lambda, z, z);
    const double ztw = z.dot(w);
    double next = lambda + (r / ztw) * (std::sqrt(r) - p.radius) / p.radius;
    if (!(next > lo && next < hi)) {
      if (!found_outside) {
        // Newton points at lambda <= 0: the minimizer may sit inside the sphere.
        if (d <= options.dense_limit) return eigen_route(surrogate, p, std::move(iterates));
        const double probe = 1e-12 * hi;
        Vector zp = solve(probe, p.grad, z);
        const double rp = zp.squaredNorm();
        iterates.push_back({probe, rp});
        if (rp < target) {
          SeekResult out = finish(surrogate, p, (p.radius / zp.norm()) * zp);
          out.lambda = 0.0;
          out.interior = true;
          out.approximate = true;
          out.iterates = std::move(iterates);
          return out;
        }
        lo = probe;
        found_outside = true;
      }
      next = 0.5 * (lo + hi);
    }
    if (next == lambda) break;
    lambda = next;
    z = solve(lambda, p.grad, z);
    r = z.squaredNorm();
    iterates.push_back({lambda, r});
    if (r > target) {
      lo = lambda;
      found_outside = true;
    } else {
      hi = lambda;
    }
    if (hi - lo <= 1e-15 * hi) break;
  }

  SeekResult out = finish(surrogate, p, (p.radius / z.norm()) * z);
  out.lambda = lambda;
  out.iterates = std::move(iterates);
  return out;
}

Vector sphere_draw(const KernelParams& kernel, Seed rng_seed) {
  Rng rng(rng_seed);
  const auto d = kernel.mu.size();
  Vector dir = standard_normal(d, rng);
  const double radius = kernel.sigma * std::sqrt(static_cast<double>(d));
  return kernel.mu + (radius / dir.norm()) * dir;
}

double surrogate_objective(const Surrogate& surrogate, const Vector& y, const Vector& x) {
  return (y - surrogate.h_bar() - surrogate.apply(x - surrogate.kernel().mu)).squaredNorm();
}

std::size_t scg_select(std::span<const double> costs) {
  require(!costs.empty(), ErrorCode::InvalidArgument, "scg_select on empty cost list");
  std::size_t best = 0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (std::isnan(costs[i])) fail(ErrorCode::InvalidCost, "NaN cost at index " + std::to_string(i));
    if (costs[i] < costs[best]) best = i;
  }
  return best;
}

}  // namespace cps::seeker
