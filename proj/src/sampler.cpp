#include "cps/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "cps/seeker.hpp"
#include "cps/surrogate.hpp"

namespace cps::sampler {

namespace {

// Seed-derivation tags; every random draw is keyed by (tag, step, restart).
enum Tag : std::uint64_t { kInit = 1, kCandidates = 2, kRenoise = 3, kFallback = 4 };

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using prior::KernelParams;

template <class F>
void at_position(int t, int r, F&& body) {
  const auto where = [&] {
    return "at step " + std::to_string(t) + ", restart " + std::to_string(r) + ": ";
  };
  try {
    body();
  } catch (const Error& e) {
    throw Error(e.code(), where() + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ModelFailure, where() + e.what());
  }
}

class Loop {
 public:
  Loop(const SamplerConfig& config, const DiffusionSchedule& schedule,
       const DenoiserHandle& denoiser, const ForwardModel* model, const Vector* y)
      : config_(config),
        schedule_(schedule),
        denoiser_(denoiser),
        model_(model),
        y_(y),
        start_(std::chrono::steady_clock::now()) {
    validate(config_);
    if (model_ != nullptr) {
      require_same_size(denoiser_.dim(), model_->input_dim(), "denoiser dim vs forward model input");
      require_same_size(y_->size(), model_->output_dim(), "observation vs forward model output");
    }
  }

  int steps() const { return schedule_.num_steps(); }
  int dim() const { return denoiser_.dim(); }

  Vector initial_state() const {
    Rng rng(derive_seed(config_.rng_seed, kInit));
    return standard_normal(dim(), rng);
  }

  Seed seed(Tag tag, int t, int r) const {
    return derive_seed(config_.rng_seed, tag, static_cast<std::uint64_t>(t),
                       static_cast<std::uint64_t>(r));
  }

  // The clean estimate of a step-0 state is the state itself.
  Vector clean(const Vector& x, int t) const {
    if (t == 0) return x;
    return prior::denoise(denoiser_, schedule_, x, t);
  }

  KernelParams kernel(const Vector& x_next, int t) const {
    return prior::reverse_kernel(schedule_, x_next, clean(x_next, t + 1), t + 1);
  }

  Matrix evaluate(const Matrix& candidates, int t, RunRecord& rec) const {
    Matrix values(model_->output_dim(), candidates.cols());
    for (Eigen::Index i = 0; i < candidates.cols(); ++i) {
      values.col(i) = (*model_)(clean(candidates.col(i), t));
    }
    rec.forward_calls += candidates.cols();
    return values;
  }

  double cost(const Vector& h) const { return (*y_ - h).squaredNorm(); }

  double diagnostic_cost(const Vector& x, int t, RunRecord& rec) const {
    ++rec.diagnostic_calls;
    return cost((*model_)(clean(x, t)));
  }

  std::vector<double> costs(const Matrix& values) const {
    std::vector<double> out(static_cast<std::size_t>(values.cols()));
    for (Eigen::Index i = 0; i < values.cols(); ++i) out[i] = cost(values.col(i));
    return out;
  }

  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  const SamplerConfig& config() const { return config_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  const Vector& y() const { return *y_; }

 private:
  const SamplerConfig& config_;
  const DiffusionSchedule& schedule_;
  const DenoiserHandle& denoiser_;
  const ForwardModel* model_;
  const Vector* y_;
  std::chrono::steady_clock::time_point start_;
};

double relative_sphere_residual(const Vector& x, const KernelParams& k) {
  const double r2 = k.sigma * k.sigma * static_cast<double>(x.size());
  return std::abs((x - k.mu).squaredNorm() / r2 - 1.0);
}

void notify(const Observer& observer, int t, int r, const Matrix& candidates, const Vector& chosen,
            const surrogate::Surrogate* fit = nullptr) {
  if (observer) observer(StepView{t, r, candidates, chosen, fit});
}

// Shared single-pass loop for SCG and rank-selection diagnostics. `pick`
// returns the next state and its trace cost given candidates and their costs.
template <class Pick>
RunRecord selection_loop(Loop& loop, const Observer& observer, Pick&& pick) {
  RunRecord rec;
  Vector x = loop.initial_state();
  const int n = loop.config().num_particles;
  for (int t = loop.steps() - 1; t >= 0; --t) {
    at_position(t, 1, [&] {
      const KernelParams k = loop.kernel(x, t);
      const Matrix cand = surrogate::draw_from_kernel(k, n, loop.seed(kCandidates, t, 1));
      const Matrix values = loop.evaluate(cand, t, rec);
      const std::vector<double> costs = loop.costs(values);
      TraceEntry e;
      e.step_index = t;
      e.constraint_residual = kNaN;
      e.jensen_gap = kNaN;
      Vector next = pick(k, cand, costs, t, rec, e.terminal_cost);
      notify(observer, t, 1, cand, next);
      x = std::move(next);
      e.wall_time = loop.seconds();
      rec.trace.push_back(e);
    });
  }
  rec.final_sample = std::move(x);
  rec.final_cost = rec.trace.back().terminal_cost;
  return rec;
}

}  // namespace

const char* to_string(Method method) {
  switch (method) {
    case Method::Cps: return "cps";
    case Method::Scg: return "scg";
    case Method::Unconditional: return "unconditional";
  }
  return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
  if (name == "cps") return Method::Cps;
  if (name == "scg") return Method::Scg;
  if (name == "unconditional") return Method::Unconditional;
  return std::nullopt;
}

void validate(const SamplerConfig& config) {
  const int min_n = config.method == Method::Cps ? 2 : 1;
  require(config.num_particles >= min_n, ErrorCode::InvalidArgument,
          std::string("num_particles must be >= ") + std::to_string(min_n) + " for " +
              to_string(config.method));
  require(config.num_restarts >= 1, ErrorCode::InvalidArgument, "num_restarts must be >= 1");
  require(config.restart_fraction >= 0.0 && config.restart_fraction <= 1.0,
          ErrorCode::InvalidArgument, "restart_fraction must lie in [0, 1]");
}

int restart_window(const SamplerConfig& config, int num_steps) {
  const double w = std::floor(config.restart_fraction * num_steps + 1e-9);
  return std::clamp(static_cast<int>(w), 0, num_steps);
}

RunRecord run_cps(const SamplerConfig& config, const DiffusionSchedule& schedule,
                  const DenoiserHandle& denoiser, const ForwardModel& model, const Vector& y,
                  const Observer& observer) {
  SamplerConfig cfg = config;
  cfg.method = Method::Cps;
  Loop loop(cfg, schedule, denoiser, &model, &y);
  const int steps = loop.steps();
  const int window = restart_window(cfg, steps);
  const int n = cfg.num_particles;
  const int d = loop.dim();

  RunRecord rec;
  Vector x = loop.initial_state();
  for (int t = steps - 1; t >= 0; --t) {
    const int passes = t >= steps - window ? cfg.num_restarts : 1;
    for (int r = passes; r >= 1; --r) {
      at_position(t, r, [&] {
        const KernelParams k = loop.kernel(x, t);
        TraceEntry e;
        e.step_index = t;
        e.restart = r;
        Matrix cand;
        Vector next;
        std::optional<surrogate::Surrogate> fit;
        if (k.sigma == 0.0) {
          // Deterministic step: every candidate coincides with mu.
          cand = surrogate::draw_from_kernel(k, n, loop.seed(kCandidates, t, r));
          const Matrix values = loop.evaluate(cand, t, rec);
          next = k.mu;
          e.terminal_cost = loop.cost(values.col(0));
          e.constraint_residual = 0.0;
          e.jensen_gap = kNaN;
        } else {
          cand = surrogate::sample_candidates(k, n, loop.seed(kCandidates, t, r));
          Matrix values = loop.evaluate(cand, t, rec);
          const surrogate::ParticleBatch batch(cand, std::move(values), k);
          fit = surrogate::fit_surrogate(batch);
          ++rec.surrogate_fits;
          e.jensen_gap = surrogate::jensen_gap(batch, *fit);
          try {
            next = seeker::seek_asymptotic(*fit, loop.y(), d).x_star;
          } catch (const Error& err) {
            if (err.code() != ErrorCode::ZeroGradient) throw;
            next = seeker::sphere_draw(k, loop.seed(kFallback, t, r));
            e.fallback = true;
            ++rec.fallbacks;
          }
          e.constraint_residual = relative_sphere_residual(next, k);
          e.terminal_cost = loop.diagnostic_cost(next, t, rec);
        }
        notify(observer, t, r, cand, next, fit ? &*fit : nullptr);
        if (r > 1) {
          x = prior::forward_noise(schedule, next, t, loop.seed(kRenoise, t, r));
        } else {
          x = std::move(next);
        }
        e.wall_time = loop.seconds();
        rec.trace.push_back(e);
      });
    }
  }
  rec.final_sample = std::move(x);
  rec.final_cost = rec.trace.back().terminal_cost;
  return rec;
}

RunRecord run_scg(const SamplerConfig& config, const DiffusionSchedule& schedule,
                  const DenoiserHandle& denoiser, const ForwardModel& model, const Vector& y,
                  const Observer& observer) {
  SamplerConfig cfg = config;
  cfg.method = Method::Scg;
  Loop loop(cfg, schedule, denoiser, &model, &y);
  return selection_loop(loop, observer,
                        [](const KernelParams&, const Matrix& cand, const std::vector<double>& costs,
                           int, RunRecord&, double& cost) {
                          const std::size_t best = seeker::scg_select(costs);
                          cost = costs[best];
                          return Vector(cand.col(static_cast<Eigen::Index>(best)));
                        });
}

RunRecord run_unconditional(const SamplerConfig& config, const DiffusionSchedule& schedule,
                            const DenoiserHandle& denoiser, const Observer& observer) {
  SamplerConfig cfg = config;
  cfg.method = Method::Unconditional;
  Loop loop(cfg, schedule, denoiser, nullptr, nullptr);
  RunRecord rec;
  Vector x = loop.initial_state();
  for (int t = loop.steps() - 1; t >= 0; --t) {
    at_position(t, 1, [&] {
      const KernelParams k = loop.kernel(x, t);
      const Matrix cand = surrogate::draw_from_kernel(k, 1, loop.seed(kCandidates, t, 1));
      TraceEntry e;
      e.step_index = t;
      e.terminal_cost = kNaN;
      e.constraint_residual = kNaN;
      e.jensen_gap = kNaN;
      x = cand.col(0);
      notify(observer, t, 1, Matrix(), x);
      e.wall_time = loop.seconds();
      rec.trace.push_back(e);
    });
  }
  rec.final_sample = std::move(x);
  rec.final_cost = kNaN;
  return rec;
}

RunRecord run(const SamplerConfig& config, const DiffusionSchedule& schedule,
              const DenoiserHandle& denoiser, const ForwardModel& model, const Vector& y,
              const Observer& observer) {
  switch (config.method) {
    case Method::Cps: return run_cps(config, schedule, denoiser, model, y, observer);
    case Method::Scg: return run_scg(config, schedule, denoiser, model, y, observer);
    case Method::Unconditional: return run_unconditional(config, schedule, denoiser, observer);
  }
  fail(ErrorCode::InvalidArgument, "unknown sampler method");
}

RunRecord particle_diagnostic(const RankSelection& selection, const SamplerConfig& config,
                              const DiffusionSchedule& schedule, const DenoiserHandle& denoiser,
                              const ForwardModel& model, const Vector& y,
                              const Observer& observer) {
  SamplerConfig cfg = config;
  cfg.method = Method::Scg;
  require(selection.k >= 1 && selection.k <= cfg.num_particles, ErrorCode::InvalidSelection,
          "rank " + std::to_string(selection.k) + " outside 1.." +
              std::to_string(cfg.num_particles));
  Loop loop(cfg, schedule, denoiser, &model, &y);
  return selection_loop(
      loop, observer,
      [&](const KernelParams& k, const Matrix& cand, const std::vector<double>& costs, int t,
          RunRecord& rec, double& cost) {
        seeker::scg_select(costs);  // rejects NaN
        std::vector<std::size_t> order(costs.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
        if (selection.kind == RankSelection::Kind::Top) {
          const std::size_t pick = order[static_cast<std::size_t>(selection.k - 1)];
          cost = costs[pick];
          return Vector(cand.col(static_cast<Eigen::Index>(pick)));
        }
        const std::size_t pick = order[order.size() - static_cast<std::size_t>(selection.k)];
        if (k.sigma == 0.0) {
          cost = costs[pick];
          return Vector(k.mu);
        }
        Vector next = 2.0 * k.mu - cand.col(static_cast<Eigen::Index>(pick));
        cost = loop.diagnostic_cost(next, t, rec);
        return next;
      });
}

}  // namespace cps::sampler
