#pragma once

#include <array>
#include <complex>
#include <vector>

#include "cps/common.hpp"
#include "cps/forward/model.hpp"

namespace cps::forward {

using Complex = std::complex<double>;

struct VlbiConfig {
  int grid_side = 0;
  /// Station coordinates in grid-frequency units (cycles per image).
  std::vector<std::array<double, 2>> telescope_positions;
  /// Epochs, given as the baseline rotation angle in radians.
  std::vector<double> time_samples;
  double beta_cph = 1.0;
  double beta_camp = 1.0;
  double rho = 1.0;
  double y_flux = 0.0;

  int num_telescopes() const { return static_cast<int>(telescope_positions.size()); }
  int num_epochs() const { return static_cast<int>(time_samples.size()); }
  /// Closure phases per epoch: C(n, 3).
  int num_triangles() const;
  /// Log closure amplitudes per epoch: C(n, 4).
  int num_quadrangles() const;
};

void validate(const VlbiConfig& cfg);

/// Visibilities V_ab for a < b at every epoch.
class VisibilitySet {
 public:
  VisibilitySet(int num_telescopes, int num_epochs);

  int num_telescopes() const { return n_; }
  int num_epochs() const { return epochs_; }

  /// V_ab at epoch e; for a > b returns conj(V_ba).
  Complex at(int epoch, int a, int b) const;
  void set(int epoch, int a, int b, Complex v);

  /// V'_ab = g_a conj(g_b) V_ab, gains indexed [epoch][telescope].
  void apply_gains(const std::vector<std::vector<Complex>>& gains);

 private:
  std::size_t index(int epoch, int a, int b) const;

  int n_;
  int epochs_;
  std::vector<Complex> values_;
};

struct VlbiObservation {
  Vector closure_phases;     // per epoch, triples a < b < c in lexicographic order
  Vector log_closure_amps;   // per epoch, quadruples a < b < c < d in lexicographic order
  double total_flux = 0.0;

  /// [closure phases, log closure amplitudes, total flux].
  Vector flatten() const;
  static VlbiObservation unflatten(const Vector& v, const VlbiConfig& cfg);
};

/// Nearest-grid-point DFT samples of the image at each rotated baseline.
VisibilitySet vlbi_visibilities(const Vector& x, const VlbiConfig& cfg);

/// arg(V_ab V_bc conj(V_ac)), bispectrum convention.
double closure_phase(const VisibilitySet& v, int epoch, int a, int b, int c);
/// log(|V_ab| |V_cd| / (|V_ac| |V_bd|)).
double log_closure_amplitude(const VisibilitySet& v, int epoch, int a, int b, int c, int d);

Vector closure_phases(const VisibilitySet& v);
Vector log_closure_amplitudes(const VisibilitySet& v);

VlbiObservation vlbi_observe(const Vector& x, const VlbiConfig& cfg);

/// Wraps an angle to (-pi, pi].
double wrap_phase(double angle);

double vlbi_loss(const VlbiObservation& obs, const VlbiObservation& pred, const VlbiConfig& cfg);

/// Flattened observation; noise scale is beta_cph on phases, beta_camp on
/// amplitudes and 0 on the flux entry.
ForwardModel make_vlbi(VlbiConfig cfg, double sigma_y);

}  // namespace cps::forward
