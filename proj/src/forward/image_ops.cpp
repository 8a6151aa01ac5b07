#include "cps/forward/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cps::forward {

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Vector gaussian_taps(double kernel_std, int kernel_side) {
  const int half = kernel_side / 2;
  Vector taps = Vector::Zero(kernel_side);
  if (!(kernel_std > 0.0)) {
    taps[half] = 1.0;
    return taps;
  }
  for (int i = 0; i < kernel_side; ++i) {
    const double r = i - half;
    taps[i] = std::exp(-r * r / (2.0 * kernel_std * kernel_std));
  }
  return taps / taps.sum();
}

void check_kernel(double kernel_std, int kernel_side) {
  require(kernel_side >= 1 && kernel_side % 2 == 1, ErrorCode::InvalidArgument,
          "kernel_side must be a positive odd integer, got " + std::to_string(kernel_side));
  require(kernel_std >= 0.0 && std::isfinite(kernel_std), ErrorCode::InvalidArgument,
          "kernel_std must be finite and >= 0");
}

}  // namespace

int image_side(Eigen::Index size) {
  const auto side = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(size))));
  require(size > 0 && side * side == size, ErrorCode::DimensionMismatch,
          "image vector of length " + std::to_string(size) + " is not square");
  return static_cast<int>(side);
}

Vector apply_mask(const Vector& x, const std::vector<std::uint8_t>& mask) {
  require_same_size(x.size(), static_cast<Eigen::Index>(mask.size()), "mask length");
  Eigen::Index kept = 0;
  for (auto m : mask) kept += m != 0;
  Vector y(kept);
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)] != 0) y[j++] = x[i];
  }
  return y;
}

Vector downsample(const Vector& x, int factor) {
  const int side = image_side(x.size());
  require(factor >= 1 && side % factor == 0, ErrorCode::InvalidArgument,
          "downsample factor " + std::to_string(factor) + " does not divide side " +
              std::to_string(side));
  const int out_side = side / factor;
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  Vector y = Vector::Zero(static_cast<Eigen::Index>(out_side) * out_side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      y[(r / factor) * out_side + c / factor] += x[r * side + c];
    }
  }
  return y * inv;
}

Matrix gaussian_kernel(double kernel_std, int kernel_side) {
  check_kernel(kernel_std, kernel_side);
  const Vector taps = gaussian_taps(kernel_std, kernel_side);
  return taps * taps.transpose();
}

Vector gaussian_blur(const Vector& x, double kernel_std, int kernel_side) {
  check_kernel(kernel_std, kernel_side);
  const int side = image_side(x.size());
  const Vector taps = gaussian_taps(kernel_std, kernel_side);
  const int half = kernel_side / 2;

  // Separable: rows, then columns.
  Vector tmp = Vector::Zero(x.size());
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kernel_side; ++k) {
        acc += taps[k] * x[r * side + reflect_index(c + k - half, side)];
      }
      tmp[r * side + c] = acc;
    }
  }
  Vector out = Vector::Zero(x.size());
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kernel_side; ++k) {
        acc += taps[k] * tmp[reflect_index(r + k - half, side) * side + c];
      }
      out[r * side + c] = acc;
    }
  }
  return out;
}

Quantized quantize(const Vector& x, int levels) {
  require(levels >= 2, ErrorCode::InvalidArgument, "quantize needs levels >= 2");
  Quantized q;
  q.values.resize(x.size());
  const double steps = levels - 1;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double v = x[i];
    if (v < 0.0 || v > 1.0 || std::isnan(v)) {
      q.clipped = true;
      v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
    }
    q.values[i] = std::round(v * steps) / steps;
  }
  return q;
}

ForwardModel make_mask(std::vector<std::uint8_t> mask, double sigma_y) {
  const int d = static_cast<int>(mask.size());
  int m = 0;
  for (auto v : mask) m += v != 0;
  require(m > 0, ErrorCode::InvalidArgument, "mask keeps no entries: empty observation");
  return ForwardModel(
      ModelKind::Mask, d, m, sigma_y,
      [mask = std::move(mask)](const Vector& x) { return apply_mask(x, mask); }, true);
}

ForwardModel make_downsample(int side, int factor, double sigma_y) {
  require(side >= 1 && factor >= 1 && side % factor == 0, ErrorCode::InvalidArgument,
          "downsample factor must divide side");
  const int out = side / factor;
  return ForwardModel(
      ModelKind::Downsample, side * side, out * out, sigma_y,
      [factor](const Vector& x) { return downsample(x, factor); }, true);
}

ForwardModel make_blur(int side, double kernel_std, int kernel_side, double sigma_y) {
  check_kernel(kernel_std, kernel_side);
  return ForwardModel(
      ModelKind::Blur, side * side, side * side, sigma_y,
      [kernel_std, kernel_side](const Vector& x) {
        return gaussian_blur(x, kernel_std, kernel_side);
      },
      true);
}

ForwardModel make_quantize(int dim, int levels, double sigma_y) {
  require(levels >= 2, ErrorCode::InvalidArgument, "quantize needs levels >= 2");
  return ForwardModel(ModelKind::Quantize, dim, dim, sigma_y,
                      [levels](const Vector& x) { return quantize(x, levels).values; });
}

}  // namespace cps::forward
