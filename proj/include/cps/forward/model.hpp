#pragma once

#include <functional>
#include <string>

#include "cps/common.hpp"

namespace cps::forward {

enum class ModelKind { Mask, Downsample, Blur, Quantize, Vlbi, NavierStokes, Identity, Custom };

const char* to_string(ModelKind kind);

/// Black-box measurement operator H: R^d -> R^m with additive Gaussian noise.
/// Only evaluation is exposed.
class ForwardModel {
 public:
  using Fn = std::function<Vector(const Vector&)>;

  ForwardModel(ModelKind kind, int input_dim, int output_dim, double sigma_y, Fn fn,
               bool linear = false);

  Vector operator()(const Vector& x) const;

  ModelKind kind() const { return kind_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  double sigma_y() const { return sigma_y_; }
  bool is_linear() const { return linear_; }

  /// Per-output noise std used by synthesize_observation. Defaults to sigma_y
  /// everywhere; VLBI sets one std per closure product.
  const Vector& noise_scale() const { return noise_scale_; }
  void set_noise_scale(Vector scale);

 private:
  ModelKind kind_;
  int input_dim_;
  int output_dim_;
  double sigma_y_;
  Fn fn_;
  bool linear_;
  Vector noise_scale_;
};

/// y = H(x_true) + noise_scale * eps, eps ~ N(0, I) from the seeded generator.
Vector synthesize_observation(const ForwardModel& model, const Vector& x_true, Seed rng_seed);

/// Terminal cost ||y - H(x)||^2.
double terminal_cost(const ForwardModel& model, const Vector& y, const Vector& x);

ForwardModel make_identity(int dim, double sigma_y);
ForwardModel make_custom(int input_dim, int output_dim, ForwardModel::Fn fn, double sigma_y,
                         bool linear = false);

}  // namespace cps::forward
