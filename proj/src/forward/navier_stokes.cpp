#include "cps/forward/navier_stokes.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include "cps/forward/image_ops.hpp"

namespace cps::forward {

namespace {

// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

using Cplx = std::complex<double>;

class Spectral {
 public:
  explicit Spectral(int n) : n_(n), nh_(n / 2 + 1) {
    real_ = static_cast<double*>(fftw_malloc(sizeof(double) * n_ * n_));
    spec_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n_ * nh_));
    std::lock_guard<std::mutex> lock(planner_mutex());
    // FFTW_ESTIMATE keeps plan choice, and therefore results, deterministic.
    forward_ = fftw_plan_dft_r2c_2d(n_, n_, real_, spec_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_2d(n_, n_, spec_, real_, FFTW_ESTIMATE);
  }
  ~Spectral() {
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(forward_);
      fftw_destroy_plan(inverse_);
    }
    fftw_free(real_);
    fftw_free(spec_);
  }
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  int size() const { return n_ * nh_; }

  void to_spectral(const std::vector<double>& in, std::vector<Cplx>& out) {
    std::copy(in.begin(), in.end(), real_);
    fftw_execute(forward_);
    out.resize(static_cast<std::size_t>(size()));
    for (int i = 0; i < size(); ++i) out[i] = Cplx(spec_[i][0], spec_[i][1]);
  }

  // c2r overwrites its input, so the spectrum is copied in every time.
  void to_physical(const std::vector<Cplx>& in, std::vector<double>& out) {
    for (int i = 0; i < size(); ++i) {
      spec_[i][0] = in[i].real();
      spec_[i][1] = in[i].imag();
    }
    fftw_execute(inverse_);
    const double scale = 1.0 / (static_cast<double>(n_) * n_);
    out.resize(static_cast<std::size_t>(n_) * n_);
    for (int i = 0; i < n_ * n_; ++i) out[i] = real_[i] * scale;
  }

 private:
  int n_;
  int nh_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

struct Wavenumbers {
  std::vector<double> kx, ky;       // derivative multipliers, Nyquist zeroed
  std::vector<double> k2;           // |k|^2
  std::vector<double> dealias;      // 1 inside the 2/3 box, else 0

  explicit Wavenumbers(int n) {
    const int nh = n / 2 + 1;
    const double cutoff = (2.0 / 3.0) * (n / 2);
    kx.resize(static_cast<std::size_t>(n) * nh);
    ky.resize(kx.size());
    k2.resize(kx.size());
    dealias.resize(kx.size());
    for (int i = 0; i < n; ++i) {
      const int wy = i <= n / 2 ? i : i - n;
      for (int j = 0; j < nh; ++j) {
        const int wx = j;
        const std::size_t idx = static_cast<std::size_t>(i) * nh + j;
        kx[idx] = (2 * j == n) ? 0.0 : wx;
        ky[idx] = (2 * i == n) ? 0.0 : wy;
        k2[idx] = static_cast<double>(wx) * wx + static_cast<double>(wy) * wy;
        dealias[idx] = (std::abs(wx) <= cutoff && std::abs(wy) <= cutoff) ? 1.0 : 0.0;
      }
    }
  }
};

struct Velocity {
  std::vector<double> u, v;
};

class VorticitySolver {
 public:
  explicit VorticitySolver(int n) : n_(n), fft_(n), k_(n) {}

  void to_spectral(const Vector& w, std::vector<Cplx>& out) {
    buf_.assign(w.data(), w.data() + w.size());
    fft_.to_spectral(buf_, out);
  }

  Vector to_physical(const std::vector<Cplx>& w_hat) {
    fft_.to_physical(w_hat, buf_);
    return Eigen::Map<const Vector>(buf_.data(), static_cast<Eigen::Index>(buf_.size()));
  }

  Velocity velocity(const std::vector<Cplx>& w_hat) {
    const std::size_t m = w_hat.size();
    std::vector<Cplx> u_hat(m), v_hat(m);
    const Cplx i1(0.0, 1.0);
    for (std::size_t q = 0; q < m; ++q) {
      const Cplx psi = k_.k2[q] > 0.0 ? w_hat[q] / k_.k2[q] : Cplx(0.0);
      u_hat[q] = i1 * k_.ky[q] * psi;
      v_hat[q] = -i1 * k_.kx[q] * psi;
    }
    Velocity vel;
    fft_.to_physical(u_hat, vel.u);
    fft_.to_physical(v_hat, vel.v);
    return vel;
  }

  // Dealiased -(u . grad w); also returns max speed for the CFL check.
  std::vector<Cplx> advection(const std::vector<Cplx>& w_hat, double& max_speed) {
    const std::size_t m = w_hat.size();
    const Velocity vel = velocity(w_hat);
    std::vector<Cplx> wx_hat(m), wy_hat(m);
    const Cplx i1(0.0, 1.0);
    for (std::size_t q = 0; q < m; ++q) {
      wx_hat[q] = i1 * k_.kx[q] * w_hat[q];
      wy_hat[q] = i1 * k_.ky[q] * w_hat[q];
    }
    std::vector<double> wx, wy;
    fft_.to_physical(wx_hat, wx);
    fft_.to_physical(wy_hat, wy);
    std::vector<double> prod(wx.size());
    max_speed = 0.0;
    for (std::size_t p = 0; p < prod.size(); ++p) {
      prod[p] = -(vel.u[p] * wx[p] + vel.v[p] * wy[p]);
      max_speed = std::max(max_speed, std::hypot(vel.u[p], vel.v[p]));
    }
    std::vector<Cplx> out;
    fft_.to_spectral(prod, out);
    for (std::size_t q = 0; q < m; ++q) out[q] *= k_.dealias[q];
    out[0] = 0.0;
    return out;
  }

  const Wavenumbers& k() const { return k_; }
  int side() const { return n_; }

 private:
  int n_;
  Spectral fft_;
  Wavenumbers k_;
  std::vector<double> buf_;
};

}  // namespace

void validate(const NsConfig& cfg) {
  const int n = cfg.grid_side;
  require(n >= 4 && (n & (n - 1)) == 0, ErrorCode::InvalidArgument,
          "NS grid_side must be a power of 2 (>= 4), got " + std::to_string(n));
  require(cfg.viscosity >= 0.0, ErrorCode::InvalidArgument, "NS viscosity must be >= 0");
  require(cfg.final_time > 0.0 && cfg.dt > 0.0, ErrorCode::InvalidArgument,
          "NS final_time and dt must be positive");
  const int s = cfg.downscale_factor;
  require((s == 1 || s == 2 || s == 4 || s == 8) && n % s == 0, ErrorCode::InvalidArgument,
          "NS downscale_factor must be one of 1, 2, 4, 8 and divide grid_side");
  if (cfg.forcing.size() != 0) {
    require_same_size(cfg.forcing.size(), static_cast<Eigen::Index>(n) * n, "NS forcing field");
  }
}

Vector ns_forward(const Vector& w0, const NsConfig& cfg) {
  validate(cfg);
  const int n = cfg.grid_side;
  require_same_size(w0.size(), static_cast<Eigen::Index>(n) * n, "NS initial vorticity");

  // Integer number of steps; dt is shrunk slightly when T is not a multiple.
  const auto steps =
      std::max<long long>(1, static_cast<long long>(std::ceil(cfg.final_time / cfg.dt - 1e-9)));
  const double dt = cfg.final_time / static_cast<double>(steps);

  VorticitySolver solver(n);
  std::vector<Cplx> w_hat;
  solver.to_spectral(w0, w_hat);
  std::vector<Cplx> f_hat(w_hat.size(), Cplx(0.0));
  if (cfg.forcing.size() != 0) {
    solver.to_spectral(cfg.forcing, f_hat);
    f_hat[0] = 0.0;
  }

  const auto& k2 = solver.k().k2;
  std::vector<double> lhs(w_hat.size()), rhs(w_hat.size());
  for (std::size_t q = 0; q < w_hat.size(); ++q) {
    const double a = 0.5 * dt * cfg.viscosity * k2[q];
    lhs[q] = 1.0 / (1.0 + a);
    rhs[q] = 1.0 - a;
  }

  const double cfl_scale = dt * n / (2.0 * std::numbers::pi);
  std::vector<Cplx> pred(w_hat.size());
  for (long long step = 0; step < steps; ++step) {
    double speed = 0.0;
    const std::vector<Cplx> n0 = solver.advection(w_hat, speed);
    if (cfl_scale * speed > 1.0) {
      fail(ErrorCode::CflViolation, "CFL condition violated at step " + std::to_string(step) +
                                        " (dt*max|u|*N/(2pi) = " +
                                        std::to_string(cfl_scale * speed) + ")");
    }
    for (std::size_t q = 0; q < w_hat.size(); ++q) {
      pred[q] = (rhs[q] * w_hat[q] + dt * (n0[q] + f_hat[q])) * lhs[q];
    }
    double unused = 0.0;
    const std::vector<Cplx> n1 = solver.advection(pred, unused);
    for (std::size_t q = 1; q < w_hat.size(); ++q) {
      w_hat[q] = (rhs[q] * w_hat[q] + dt * (0.5 * (n0[q] + n1[q]) + f_hat[q])) * lhs[q];
    }
  }

  Vector w = solver.to_physical(w_hat);
  if (cfg.downscale_factor == 1) return w;
  return downsample(w, cfg.downscale_factor);
}

double kinetic_energy(const Vector& w, int grid_side) {
  require_same_size(w.size(), static_cast<Eigen::Index>(grid_side) * grid_side, "vorticity field");
  VorticitySolver solver(grid_side);
  std::vector<Cplx> w_hat;
  solver.to_spectral(w, w_hat);
  const Velocity vel = solver.velocity(w_hat);
  double acc = 0.0;
  for (std::size_t p = 0; p < vel.u.size(); ++p) acc += vel.u[p] * vel.u[p] + vel.v[p] * vel.v[p];
  return 0.5 * acc / static_cast<double>(vel.u.size());
}

ForwardModel make_navier_stokes(NsConfig cfg, double sigma_y) {
  validate(cfg);
  const int d = cfg.grid_side * cfg.grid_side;
  const int out_side = cfg.grid_side / cfg.downscale_factor;
  return ForwardModel(ModelKind::NavierStokes, d, out_side * out_side, sigma_y,
                      [cfg = std::move(cfg)](const Vector& w0) { return ns_forward(w0, cfg); });
}

}  // namespace cps::forward
