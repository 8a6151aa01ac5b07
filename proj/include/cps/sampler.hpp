#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cps/common.hpp"
#include "cps/forward/model.hpp"
#include "cps/prior/denoiser.hpp"
#include "cps/prior/schedule.hpp"
#include "cps/surrogate.hpp"

namespace cps::sampler {

using forward::ForwardModel;
using prior::DenoiserHandle;
using prior::DiffusionSchedule;

enum class Method { Cps, Scg, Unconditional };

const char* to_string(Method method);
std::optional<Method> parse_method(const std::string& name);

struct SamplerConfig {
  int num_particles = 64;
  int num_restarts = 5;
  double restart_fraction = 0.2;  // earliest fraction of steps where restart runs
  Method method = Method::Cps;
  Seed rng_seed = 0;
};

void validate(const SamplerConfig& config);

/// Number of earliest steps (t = T-1 downward) that run the restart loop.
int restart_window(const SamplerConfig& config, int num_steps);

/// One executed (step, restart) iteration.
struct TraceEntry {
  int step_index = 0;
  int restart = 1;  // counts down N_r..1; 1 is the last pass at a step
  double terminal_cost = 0.0;        // ||y - H(x0_hat(x_t))||^2 of the chosen state; NaN if unguided
  double constraint_residual = 0.0;  // | ||x_t - mu||^2 / (sigma^2 d) - 1 |; NaN if not applicable
  double jensen_gap = 0.0;           // NaN when no surrogate was fitted
  bool fallback = false;             // zero-gradient sphere draw
  double wall_time = 0.0;            // seconds since run start
};

struct RunRecord {
  std::vector<TraceEntry> trace;
  Vector final_sample;
  double final_cost = 0.0;  // ||y - H(x0)||^2; NaN for unconditional runs
  long long forward_calls = 0;     // candidate evaluations, n per executed iteration
  long long diagnostic_calls = 0;  // extra evaluations for trace costs of non-candidate states
  int surrogate_fits = 0;
  int fallbacks = 0;
};

/// Per-iteration hook, called after the next state is chosen.
struct StepView {
  int step_index;
  int restart;
  const Matrix& candidates;  // d x n; empty for unconditional steps
  const Vector& chosen;
  const surrogate::Surrogate* fit = nullptr;  // CPS steps with sigma > 0 only
};
using Observer = std::function<void(const StepView&)>;

RunRecord run_cps(const SamplerConfig& config, const DiffusionSchedule& schedule,
                  const DenoiserHandle& denoiser, const ForwardModel& model, const Vector& y,
                  const Observer& observer = {});

/// Keeps the candidate whose clean estimate best matches y. No restart.
RunRecord run_scg(const SamplerConfig& config, const DiffusionSchedule& schedule,
                  const DenoiserHandle& denoiser, const ForwardModel& model, const Vector& y,
                  const Observer& observer = {});

RunRecord run_unconditional(const SamplerConfig& config, const DiffusionSchedule& schedule,
                            const DenoiserHandle& denoiser, const Observer& observer = {});

/// Dispatches on config.method.
RunRecord run(const SamplerConfig& config, const DiffusionSchedule& schedule,
              const DenoiserHandle& denoiser, const ForwardModel& model, const Vector& y,
              const Observer& observer = {});

struct RankSelection {
  enum class Kind { Top, BottomReversed };
  Kind kind = Kind::Top;
  int k = 1;  // 1-based rank: Top picks the k-th best, BottomReversed the k-th worst
};

/// SCG loop with rank selection. BottomReversed moves to mu - (x_sel - mu).
RunRecord particle_diagnostic(const RankSelection& selection, const SamplerConfig& config,
                              const DiffusionSchedule& schedule, const DenoiserHandle& denoiser,
                              const ForwardModel& model, const Vector& y,
                              const Observer& observer = {});

}  // namespace cps::sampler
