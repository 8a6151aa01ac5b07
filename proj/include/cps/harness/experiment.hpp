#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cps/harness/config.hpp"
#include "cps/harness/metrics.hpp"
#include "cps/harness/oracle.hpp"
#include "cps/sampler.hpp"

namespace cps::harness {

inline constexpr const char* kTraceHeader =
    "step_index,restart,terminal_cost,constraint_residual,jensen_gap,fallback,wall_time";
inline constexpr const char* kRunsHeader = "seed,metric,value,finite";
inline constexpr const char* kAggregateHeader = "metric,median,q1,q3,iqr,n";

struct MetricValue {
  Metric metric;
  double value;
};

struct RunResult {
  Seed seed = 0;
  sampler::RunRecord record;
  std::vector<MetricValue> metrics;  // empty for unconditional runs
  std::filesystem::path sample_file;
};

struct MetricReport {
  std::vector<RunResult> runs;
  std::vector<std::pair<Metric, Summary>> aggregate;
  bool all_finite = true;  // false if any per-run metric is NaN or infinite
};

enum class Mode { Run, Diagnose };

/// Runs every seed and writes trace_<seed>.csv, sample_<seed>.{pgm,cpsf},
/// runs.csv, aggregate.csv, observation.cpsf and metadata.json under
/// config.output_dir. Nothing is written if setup fails.
MetricReport run_experiment(const ExperimentConfig& config, Mode mode = Mode::Run);

/// Brute-force posterior for the configured problem; writes oracle.json.
PosteriorSummary run_oracle(const ExperimentConfig& config);

/// Trace CSV text. With include_wall_time = false the last column is dropped,
/// which is the form compared for determinism.
std::string trace_csv(const std::vector<sampler::TraceEntry>& trace, bool include_wall_time = true);

/// %.17g text for a double ("nan", "inf", "-inf" for non-finite).
std::string format_double(double x);

/// Process exit status for an error: 2 config, 4 I/O, 3 anything else.
int exit_code(ErrorCode code);

}  // namespace cps::harness
