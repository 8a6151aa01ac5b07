#pragma once

#include <cstdint>
#include <vector>

#include "cps/common.hpp"
#include "cps/forward/model.hpp"

namespace cps::forward {

// Images are square, row-major, side * side entries.

/// Side length of a square image vector; DimensionMismatch if size is not a square.
int image_side(Eigen::Index size);

/// Entries of x where mask != 0, in raster order.
Vector apply_mask(const Vector& x, const std::vector<std::uint8_t>& mask);

/// Block-average downsampling; side must be divisible by factor.
Vector downsample(const Vector& x, int factor);

/// Normalized truncated Gaussian, kernel_side x kernel_side, row-major.
Matrix gaussian_kernel(double kernel_std, int kernel_side);

/// Convolution with the normalized truncated Gaussian, mirror padding without
/// edge repetition (d c b | a b c d | c b a).
Vector gaussian_blur(const Vector& x, double kernel_std, int kernel_side);

struct Quantized {
  Vector values;
  bool clipped = false;  // some input fell outside [0, 1]
};

/// round(x * (levels - 1)) / (levels - 1) after clipping to [0, 1].
Quantized quantize(const Vector& x, int levels);

ForwardModel make_mask(std::vector<std::uint8_t> mask, double sigma_y);
ForwardModel make_downsample(int side, int factor, double sigma_y);
ForwardModel make_blur(int side, double kernel_std, int kernel_side, double sigma_y);
ForwardModel make_quantize(int dim, int levels, double sigma_y);

}  // namespace cps::forward
