#pragma once

#include "cps/common.hpp"
#include "cps/forward/model.hpp"

namespace cps::forward {

/// 2-D incompressible vorticity equation on the 2pi-periodic torus.
struct NsConfig {
  int grid_side = 64;        // power of 2
  double viscosity = 1e-3;   // > 0, or 0 for the inviscid check
  Vector forcing;            // grid_side^2 field; empty means f = 0
  double final_time = 1.0;
  double dt = 1e-3;
  int downscale_factor = 1;  // 1, 2, 4 or 8
};

void validate(const NsConfig& cfg);

/// Pseudo-spectral solve: Crank-Nicolson diffusion, Heun advection, 2/3-rule
/// dealiasing of the nonlinear term. Returns w(T) block-averaged by the
/// downscale factor. Throws CflViolation naming the step.
Vector ns_forward(const Vector& w0, const NsConfig& cfg);

/// Kinetic energy 0.5 * mean(u^2 + v^2) of the velocity induced by w.
double kinetic_energy(const Vector& w, int grid_side);

ForwardModel make_navier_stokes(NsConfig cfg, double sigma_y);

}  // namespace cps::forward
