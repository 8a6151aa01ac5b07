#include "cps/forward/model.hpp"

namespace cps::forward {

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Mask: return "mask";
    case ModelKind::Downsample: return "downsample";
    case ModelKind::Blur: return "blur";
    case ModelKind::Quantize: return "quantize";
    case ModelKind::Vlbi: return "vlbi";
    case ModelKind::NavierStokes: return "navier-stokes";
    case ModelKind::Identity: return "identity";
    case ModelKind::Custom: return "custom";
  }
  return "unknown";
}

ForwardModel::ForwardModel(ModelKind kind, int input_dim, int output_dim, double sigma_y, Fn fn,
                           bool linear)
    : kind_(kind),
      input_dim_(input_dim),
      output_dim_(output_dim),
      sigma_y_(sigma_y),
      fn_(std::move(fn)),
      linear_(linear) {
  require(input_dim_ > 0, ErrorCode::DimensionMismatch, "forward model input dim must be > 0");
  require(output_dim_ > 0, ErrorCode::DimensionMismatch,
          "forward model output dim must be > 0 (empty observation)");
  require(sigma_y_ >= 0.0, ErrorCode::InvalidArgument, "sigma_y must be nonnegative");
  require(static_cast<bool>(fn_), ErrorCode::InvalidArgument, "forward model without evaluator");
  noise_scale_ = Vector::Constant(output_dim_, sigma_y_);
}

Vector ForwardModel::operator()(const Vector& x) const {
  require_same_size(x.size(), input_dim_, "forward model input");
  Vector y = fn_(x);
  require_same_size(y.size(), output_dim_, "forward model output");
  return y;
}

void ForwardModel::set_noise_scale(Vector scale) {
  require_same_size(scale.size(), output_dim_, "noise scale");
  require((scale.array() >= 0.0).all(), ErrorCode::InvalidArgument, "noise scale must be >= 0");
  noise_scale_ = std::move(scale);
}

Vector synthesize_observation(const ForwardModel& model, const Vector& x_true, Seed rng_seed) {
  Vector y = model(x_true);
  Rng rng(rng_seed);
  const Vector eps = standard_normal(y.size(), rng);
  return y + model.noise_scale().cwiseProduct(eps);
}

double terminal_cost(const ForwardModel& model, const Vector& y, const Vector& x) {
  require_same_size(y.size(), model.output_dim(), "terminal cost observation");
  return (y - model(x)).squaredNorm();
}

ForwardModel make_identity(int dim, double sigma_y) {
  return ForwardModel(ModelKind::Identity, dim, dim, sigma_y, [](const Vector& x) { return x; },
                      true);
}

ForwardModel make_custom(int input_dim, int output_dim, ForwardModel::Fn fn, double sigma_y,
                         bool linear) {
  return ForwardModel(ModelKind::Custom, input_dim, output_dim, sigma_y, std::move(fn), linear);
}

}  // namespace cps::forward
