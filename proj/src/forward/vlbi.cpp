#include "cps/forward/vlbi.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace cps::forward {

namespace {

int choose(int n, int k) {
  if (k > n) return 0;
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return static_cast<int>(r);
}

}  // namespace

int VlbiConfig::num_triangles() const { return choose(num_telescopes(), 3); }
int VlbiConfig::num_quadrangles() const { return choose(num_telescopes(), 4); }

void validate(const VlbiConfig& cfg) {
  require(cfg.num_telescopes() >= 3, ErrorCode::InvalidArgument,
          "VLBI needs at least 3 telescopes for closure phases, got " +
              std::to_string(cfg.num_telescopes()));
  require(cfg.grid_side >= 1, ErrorCode::InvalidArgument, "VLBI grid_side must be >= 1");
  require(cfg.num_epochs() >= 1, ErrorCode::InvalidArgument, "VLBI needs at least one epoch");
  require(cfg.beta_cph > 0.0 && cfg.beta_camp > 0.0 && cfg.rho > 0.0, ErrorCode::InvalidArgument,
          "VLBI beta_cph, beta_camp and rho must be positive");
}

VisibilitySet::VisibilitySet(int num_telescopes, int num_epochs)
    : n_(num_telescopes),
      epochs_(num_epochs),
      values_(static_cast<std::size_t>(num_epochs) * num_telescopes * num_telescopes) {}

std::size_t VisibilitySet::index(int epoch, int a, int b) const {
  require(epoch >= 0 && epoch < epochs_ && a >= 0 && a < n_ && b >= 0 && b < n_ && a != b,
          ErrorCode::IndexOutOfRange, "visibility index out of range");
  return (static_cast<std::size_t>(epoch) * n_ + a) * n_ + b;
}

Complex VisibilitySet::at(int epoch, int a, int b) const {
  if (a > b) return std::conj(values_[index(epoch, b, a)]);
  return values_[index(epoch, a, b)];
}

void VisibilitySet::set(int epoch, int a, int b, Complex v) {
  if (a > b) {
    values_[index(epoch, b, a)] = std::conj(v);
  } else {
    values_[index(epoch, a, b)] = v;
  }
}

void VisibilitySet::apply_gains(const std::vector<std::vector<Complex>>& gains) {
  require_same_size(static_cast<Eigen::Index>(gains.size()), epochs_, "gain epochs");
  for (int e = 0; e < epochs_; ++e) {
    require_same_size(static_cast<Eigen::Index>(gains[e].size()), n_, "gain telescopes");
    for (int a = 0; a < n_; ++a) {
      for (int b = a + 1; b < n_; ++b) {
        set(e, a, b, gains[e][a] * std::conj(gains[e][b]) * at(e, a, b));
      }
    }
  }
}

Vector VlbiObservation::flatten() const {
  Vector out(closure_phases.size() + log_closure_amps.size() + 1);
  out << closure_phases, log_closure_amps, total_flux;
  return out;
}

VlbiObservation VlbiObservation::unflatten(const Vector& v, const VlbiConfig& cfg) {
  const Eigen::Index ncph = static_cast<Eigen::Index>(cfg.num_epochs()) * cfg.num_triangles();
  const Eigen::Index ncamp = static_cast<Eigen::Index>(cfg.num_epochs()) * cfg.num_quadrangles();
  require_same_size(v.size(), ncph + ncamp + 1, "flattened VLBI observation");
  VlbiObservation o;
  o.closure_phases = v.head(ncph);
  o.log_closure_amps = v.segment(ncph, ncamp);
  o.total_flux = v[ncph + ncamp];
  return o;
}

VisibilitySet vlbi_visibilities(const Vector& x, const VlbiConfig& cfg) {
  validate(cfg);
  const int n = cfg.grid_side;
  require_same_size(x.size(), static_cast<Eigen::Index>(n) * n, "VLBI image");
  const int nt = cfg.num_telescopes();
  VisibilitySet vis(nt, cfg.num_epochs());
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<Complex> row_sum(static_cast<std::size_t>(n));
  for (int e = 0; e < cfg.num_epochs(); ++e) {
    const double cs = std::cos(cfg.time_samples[e]);
    const double sn = std::sin(cfg.time_samples[e]);
    for (int a = 0; a < nt; ++a) {
      for (int b = a + 1; b < nt; ++b) {
        const double du = cfg.telescope_positions[a][0] - cfg.telescope_positions[b][0];
        const double dv = cfg.telescope_positions[a][1] - cfg.telescope_positions[b][1];
        // std::round is symmetric, so the (b, a) baseline lands on the mirrored cell.
        const long long k = std::llround(cs * du - sn * dv);
        const long long l = std::llround(sn * du + cs * dv);
        Complex acc = 0.0;
        for (int r = 0; r < n; ++r) {
          Complex inner = 0.0;
          for (int c = 0; c < n; ++c) {
            const double ang = -two_pi * static_cast<double>((k * c) % n) / n;
            inner += x[r * n + c] * Complex(std::cos(ang), std::sin(ang));
          }
          const double ang = -two_pi * static_cast<double>((l * r) % n) / n;
          acc += inner * Complex(std::cos(ang), std::sin(ang));
        }
        vis.set(e, a, b, acc);
      }
    }
  }
  return vis;
}

double closure_phase(const VisibilitySet& v, int epoch, int a, int b, int c) {
  return std::arg(v.at(epoch, a, b) * v.at(epoch, b, c) * std::conj(v.at(epoch, a, c)));
}

double log_closure_amplitude(const VisibilitySet& v, int epoch, int a, int b, int c, int d) {
  return std::log(std::abs(v.at(epoch, a, b))) + std::log(std::abs(v.at(epoch, c, d))) -
         std::log(std::abs(v.at(epoch, a, c))) - std::log(std::abs(v.at(epoch, b, d)));
}

Vector closure_phases(const VisibilitySet& v) {
  const int n = v.num_telescopes();
  require(n >= 3, ErrorCode::InvalidArgument, "closure phases need at least 3 telescopes");
  std::vector<double> out;
  for (int e = 0; e < v.num_epochs(); ++e) {
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        for (int c = b + 1; c < n; ++c) out.push_back(closure_phase(v, e, a, b, c));
      }
    }
  }
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Vector log_closure_amplitudes(const VisibilitySet& v) {
  const int n = v.num_telescopes();
  std::vector<double> out;
  for (int e = 0; e < v.num_epochs(); ++e) {
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        for (int c = b + 1; c < n; ++c) {
          for (int d = c + 1; d < n; ++d) out.push_back(log_closure_amplitude(v, e, a, b, c, d));
        }
      }
    }
  }
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

VlbiObservation vlbi_observe(const Vector& x, const VlbiConfig& cfg) {
  const VisibilitySet vis = vlbi_visibilities(x, cfg);
  VlbiObservation o;
  o.closure_phases = closure_phases(vis);
  o.log_closure_amps = log_closure_amplitudes(vis);
  o.total_flux = x.sum();
  return o;
}

double wrap_phase(double angle) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(angle, two_pi);  // [-pi, pi]
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

double vlbi_loss(const VlbiObservation& obs, const VlbiObservation& pred, const VlbiConfig& cfg) {
  require_same_size(obs.closure_phases.size(), pred.closure_phases.size(), "closure phases");
  require_same_size(obs.log_closure_amps.size(), pred.log_closure_amps.size(),
                    "log closure amplitudes");
  double cph = 0.0;
  for (Eigen::Index i = 0; i < obs.closure_phases.size(); ++i) {
    const double r = wrap_phase(obs.closure_phases[i] - pred.closure_phases[i]);
    cph += r * r;
  }
  const double camp = (obs.log_closure_amps - pred.log_closure_amps).squaredNorm();
  const double dflux = obs.total_flux - pred.total_flux;
  return cph / (2.0 * cfg.beta_cph * cfg.beta_cph) + camp / (2.0 * cfg.beta_camp * cfg.beta_camp) +
         cfg.rho * dflux * dflux / 2.0;
}

ForwardModel make_vlbi(VlbiConfig cfg, double sigma_y) {
  validate(cfg);
  const int ncph = cfg.num_epochs() * cfg.num_triangles();
  const int ncamp = cfg.num_epochs() * cfg.num_quadrangles();
  const int d = cfg.grid_side * cfg.grid_side;
  const double beta_cph = cfg.beta_cph;
  const double beta_camp = cfg.beta_camp;
  ForwardModel model(ModelKind::Vlbi, d, ncph + ncamp + 1, sigma_y,
                     [cfg = std::move(cfg)](const Vector& x) { return vlbi_observe(x, cfg).flatten(); });
  Vector scale(ncph + ncamp + 1);
  scale << Vector::Constant(ncph, beta_cph), Vector::Constant(ncamp, beta_camp), 0.0;
  model.set_noise_scale(std::move(scale));
  return model;
}

}  // namespace cps::forward
