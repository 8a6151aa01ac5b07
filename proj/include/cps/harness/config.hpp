#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cps/common.hpp"
#include "cps/forward/model.hpp"
#include "cps/prior/denoiser.hpp"
#include "cps/prior/gmm.hpp"
#include "cps/prior/schedule.hpp"
#include "cps/sampler.hpp"

namespace cps::harness {

enum class Metric { Psnr, Bpsnr, RelativeL2, TerminalCost, JensenGap };
const char* to_string(Metric metric);
std::optional<Metric> parse_metric(const std::string& name);

enum class FieldFormat { Pgm, Cpsf };

struct ScheduleSpec {
  int num_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  double stochasticity = 1.0;

  prior::DiffusionSchedule build() const;
};

struct PriorSpec {
  std::optional<prior::GmmPrior> gmm;  // empty for an external denoiser
  std::vector<std::string> command;    // external denoiser argv
  int dim = 0;
};

/// Fully validated experiment description. Everything that can be checked
/// without running the sampler has been checked by load_config.
struct ExperimentConfig {
  std::filesystem::path source;  // config file, for messages
  std::string canonical_json;    // config as parsed, used in metadata

  PriorSpec prior;
  ScheduleSpec schedule;
  sampler::SamplerConfig sampler;
  std::vector<Seed> seeds;

  std::string model_kind;
  std::shared_ptr<const forward::ForwardModel> model;

  Vector ground_truth;
  std::string ground_truth_source;
  Seed observation_seed = 0;

  std::filesystem::path output_dir;
  std::vector<Metric> metrics;
  double psnr_peak = 1.0;
  double bpsnr_std = 1.5;
  int bpsnr_side = 9;
  int oracle_grid_points = 0;  // 0: default for the dimension
  sampler::RankSelection diagnose;
  FieldFormat field_format = FieldFormat::Cpsf;
};

/// Parses and validates a JSON config. Relative file paths inside the config
/// resolve against the config file's directory. Throws Error(Config) with a
/// JSON-pointer path on schema problems, Error(Io) if the file is unreadable.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

struct Overrides {
  std::optional<Seed> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<sampler::Method> method;
};

/// Applies CLI overrides and re-checks the method-dependent constraints.
void apply_overrides(ExperimentConfig& config, const Overrides& overrides);

/// Prior and schedule only; used by the standalone denoiser server.
struct ServerConfig {
  prior::GmmPrior prior;
  ScheduleSpec schedule;
};
ServerConfig load_server_config(const std::filesystem::path& path);

/// Analytic handle for GMM priors, spawned process for external ones.
prior::DenoiserHandle make_denoiser(const PriorSpec& spec);

}  // namespace cps::harness
