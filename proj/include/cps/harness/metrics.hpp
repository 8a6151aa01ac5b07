#pragma once

#include <span>

#include "cps/common.hpp"

namespace cps::harness {

inline constexpr double kDefaultBpsnrStd = 1.5;
inline constexpr int kDefaultBpsnrSide = 9;

/// 10 log10(peak^2 / MSE); +infinity when MSE = 0.
double psnr(const Vector& x, const Vector& ref, double peak = 1.0);

/// psnr after blurring both images with the same normalized Gaussian.
double bpsnr(const Vector& x, const Vector& ref, double peak = 1.0,
             double blur_std = kDefaultBpsnrStd, int kernel_side = kDefaultBpsnrSide);

/// ||x - ref|| / ||ref||; InvalidArgument when ref = 0.
double relative_l2(const Vector& x, const Vector& ref);

struct Summary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  int n = 0;  // finite samples used (NaN entries are skipped)
};

/// Quantile with linear interpolation between order statistics.
double quantile(std::span<const double> sorted, double p);

/// Median and quartiles over the non-NaN values; all NaN when none remain.
Summary summarize(std::span<const double> values);

}  // namespace cps::harness
