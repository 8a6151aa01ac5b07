#include "cps/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cps/forward/image_ops.hpp"

namespace cps::harness {

double psnr(const Vector& x, const Vector& ref, double peak) {
  require_same_size(x.size(), ref.size(), "psnr inputs");
  require(x.size() > 0, ErrorCode::DimensionMismatch, "psnr of empty vectors");
  require(peak > 0.0, ErrorCode::InvalidArgument, "psnr peak must be positive");
  const double mse = (x - ref).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double bpsnr(const Vector& x, const Vector& ref, double peak, double blur_std, int kernel_side) {
  require_same_size(x.size(), ref.size(), "bpsnr inputs");
  return psnr(forward::gaussian_blur(x, blur_std, kernel_side),
              forward::gaussian_blur(ref, blur_std, kernel_side), peak);
}

double relative_l2(const Vector& x, const Vector& ref) {
  require_same_size(x.size(), ref.size(), "relative_l2 inputs");
  const double denom = ref.norm();
  require(denom > 0.0, ErrorCode::InvalidArgument, "relative_l2 against a zero reference");
  return (x - ref).norm() / denom;
}

double quantile(std::span<const double> sorted, double p) {
  require(!sorted.empty(), ErrorCode::InvalidArgument, "quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Summary summarize(std::span<const double> values) {
  std::vector<double> v;
  for (double x : values) {
    if (!std::isnan(x)) v.push_back(x);
  }
  Summary s;
  s.n = static_cast<int>(v.size());
  if (v.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.median = s.q1 = s.q3 = s.iqr = nan;
    return s;
  }
  std::sort(v.begin(), v.end());
  s.median = quantile(v, 0.5);
  s.q1 = quantile(v, 0.25);
  s.q3 = quantile(v, 0.75);
  s.iqr = s.q3 - s.q1;
  return s;
}

}  // namespace cps::harness
