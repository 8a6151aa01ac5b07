#include "cps/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cps/forward/field_io.hpp"
#include "cps/forward/image_ops.hpp"
#include "cps/forward/navier_stokes.hpp"
#include "cps/forward/vlbi.hpp"

namespace cps::harness {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Metric metric) {
  switch (metric) {
    case Metric::Psnr: return "psnr";
    case Metric::Bpsnr: return "bpsnr";
    case Metric::RelativeL2: return "relative_l2";
    case Metric::TerminalCost: return "terminal_cost";
    case Metric::JensenGap: return "jensen_gap";
  }
  return "?";
}

std::optional<Metric> parse_metric(const std::string& name) {
  for (Metric m : {Metric::Psnr, Metric::Bpsnr, Metric::RelativeL2, Metric::TerminalCost,
                   Metric::JensenGap}) {
    if (name == to_string(m)) return m;
  }
  return std::nullopt;
}

prior::DiffusionSchedule ScheduleSpec::build() const {
  return prior::build_schedule(num_steps, beta_min, beta_max, stochasticity);
}

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  fail(ErrorCode::Config, (path.empty() ? std::string("/") : path) + ": " + what);
}

std::string child(const std::string& path, const std::string& key) { return path + "/" + key; }
std::string child(const std::string& path, std::size_t i) {
  return path + "/" + std::to_string(i);
}

const json& object_at(const json& j, const std::string& path) {
  if (!j.is_object()) bad(path, "expected an object");
  return j;
}

// Unknown keys are almost always typos; reject them.
void allow_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) bad(child(path, it.key()), "unknown key");
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& required(const json& obj, const std::string& path, const char* key) {
  const json* v = find(obj, key);
  if (v == nullptr) bad(child(path, key), "missing required key");
  return *v;
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) bad(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) bad(path, "expected a finite number");
  return x;
}

long long as_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) bad(path, "expected an integer");
  return v.get<long long>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) bad(path, "expected a string");
  return v.get<std::string>();
}

double number_or(const json& obj, const std::string& path, const char* key, double fallback) {
  const json* v = find(obj, key);
  return v == nullptr ? fallback : as_number(*v, child(path, key));
}

int int_or(const json& obj, const std::string& path, const char* key, int fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  const long long x = as_integer(*v, child(path, key));
  if (x < -2147483647LL || x > 2147483647LL) bad(child(path, key), "integer out of range");
  return static_cast<int>(x);
}

double positive(double x, const std::string& path) {
  if (!(x > 0.0)) bad(path, "must be positive");
  return x;
}

Seed as_seed(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<Seed>();
  const long long x = as_integer(v, path);
  if (x < 0) bad(path, "seed must be non-negative");
  return static_cast<Seed>(x);
}

Vector as_vector(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) bad(path, "expected a non-empty array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = as_number(v[i], child(path, i));
  }
  return out;
}

Matrix as_matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) bad(path, "expected a non-empty array of rows");
  const std::size_t rows = v.size();
  std::size_t cols = 0;
  Matrix out;
  for (std::size_t r = 0; r < rows; ++r) {
    const Vector row = as_vector(v[r], child(path, r));
    if (r == 0) {
      cols = static_cast<std::size_t>(row.size());
      out.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    } else if (static_cast<std::size_t>(row.size()) != cols) {
      bad(child(path, r), "ragged matrix row");
    }
    out.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

json parse_text(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Config, where + ": invalid JSON: " + e.what());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- prior ---------------------------------------------------------------

prior::GmmPrior parse_gmm(const json& j, const std::string& path) {
  allow_keys(j, path, {"type", "components"});
  const std::string cpath = child(path, "components");
  const json& comps = required(j, path, "components");
  if (!comps.is_array() || comps.empty()) bad(cpath, "expected a non-empty array");

  std::vector<double> weights;
  std::vector<Vector> means;
  std::vector<Vector> variances;
  std::vector<Matrix> covariances;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const std::string p = child(cpath, k);
    const json& c = object_at(comps[k], p);
    allow_keys(c, p, {"weight", "mean", "variance", "covariance"});
    weights.push_back(positive(as_number(required(c, p, "weight"), child(p, "weight")),
                               child(p, "weight")));
    const Vector mean = as_vector(required(c, p, "mean"), child(p, "mean"));
    if (!means.empty() && mean.size() != means.front().size()) {
      bad(child(p, "mean"), "dimension differs from component 0");
    }
    means.push_back(mean);
    const json* var = find(c, "variance");
    const json* cov = find(c, "covariance");
    if ((var == nullptr) == (cov == nullptr)) bad(p, "give exactly one of variance, covariance");
    if (k > 0 && (cov != nullptr) != !covariances.empty()) {
      bad(p, "mixing variance and covariance across components is not supported");
    }
    if (var != nullptr) {
      const std::string vp = child(p, "variance");
      Vector v = var->is_array() ? as_vector(*var, vp)
                                 : Vector::Constant(mean.size(), as_number(*var, vp));
      if (v.size() != mean.size()) bad(vp, "length differs from mean");
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0)) bad(vp, "variances must be positive");
      }
      variances.push_back(std::move(v));
    } else {
      const std::string vp = child(p, "covariance");
      Matrix m = as_matrix(*cov, vp);
      if (m.rows() != mean.size() || m.cols() != mean.size()) bad(vp, "must be d x d");
      covariances.push_back(std::move(m));
    }
  }
  try {
    if (!covariances.empty()) return prior::GmmPrior::full(weights, means, covariances);
    return prior::GmmPrior::diagonal(weights, means, variances);
  } catch (const Error& e) {
    bad(path, e.what());
  }
}

PriorSpec parse_prior(const json& j, const std::string& path, const fs::path& base) {
  object_at(j, path);
  const std::string type = as_string(required(j, path, "type"), child(path, "type"));
  PriorSpec spec;
  if (type == "gmm") {
    spec.gmm = parse_gmm(j, path);
    spec.dim = spec.gmm->dim();
  } else if (type == "external") {
    allow_keys(j, path, {"type", "command", "dim"});
    const std::string cp = child(path, "command");
    const json& cmd = required(j, path, "command");
    if (!cmd.is_array() || cmd.empty()) bad(cp, "expected a non-empty argv array");
    for (std::size_t i = 0; i < cmd.size(); ++i) spec.command.push_back(as_string(cmd[i], child(cp, i)));
    // A relative program path is taken relative to the config file.
    if (spec.command[0].find('/') != std::string::npos) {
      spec.command[0] = resolve(base, spec.command[0]).string();
    }
    spec.dim = int_or(j, path, "dim", 0);
    if (spec.dim < 1) bad(child(path, "dim"), "must be a positive integer");
  } else {
    bad(child(path, "type"), "unknown prior type '" + type + "' (expected gmm or external)");
  }
  return spec;
}

ScheduleSpec parse_schedule(const json& j, const std::string& path) {
  object_at(j, path);
  allow_keys(j, path, {"num_steps", "beta_min", "beta_max", "stochasticity"});
  ScheduleSpec s;
  s.num_steps = int_or(j, path, "num_steps", s.num_steps);
  s.beta_min = number_or(j, path, "beta_min", s.beta_min);
  s.beta_max = number_or(j, path, "beta_max", s.beta_max);
  s.stochasticity = number_or(j, path, "stochasticity", s.stochasticity);
  if (s.num_steps < 1) bad(child(path, "num_steps"), "must be >= 1");
  if (!(s.beta_min > 0.0 && s.beta_min < 1.0)) bad(child(path, "beta_min"), "must lie in (0, 1)");
  if (!(s.beta_max >= s.beta_min && s.beta_max < 1.0)) {
    bad(child(path, "beta_max"), "must lie in [beta_min, 1)");
  }
  if (!(s.stochasticity >= 0.0 && s.stochasticity <= 1.0)) {
    bad(child(path, "stochasticity"), "must lie in [0, 1]");
  }
  return s;
}

// --- sampler -------------------------------------------------------------

sampler::SamplerConfig parse_sampler(const json& j, const std::string& path) {
  object_at(j, path);
  allow_keys(j, path, {"method", "num_particles", "num_restarts", "restart_fraction"});
  sampler::SamplerConfig c;
  if (const json* m = find(j, "method")) {
    const std::string name = as_string(*m, child(path, "method"));
    const auto method = sampler::parse_method(name);
    if (!method) bad(child(path, "method"), "unknown method '" + name + "'");
    c.method = *method;
  }
  c.num_particles = int_or(j, path, "num_particles", c.num_particles);
  c.num_restarts = int_or(j, path, "num_restarts", c.num_restarts);
  c.restart_fraction = number_or(j, path, "restart_fraction", c.restart_fraction);
  return c;
}

void check_sampler(const sampler::SamplerConfig& c) {
  try {
    sampler::validate(c);
  } catch (const Error& e) {
    bad("/sampler", e.what());
  }
}

std::vector<Seed> parse_seeds(const json& j, const std::string& path) {
  std::vector<Seed> seeds;
  if (j.is_array()) {
    if (j.empty()) bad(path, "expected at least one seed");
    for (std::size_t i = 0; i < j.size(); ++i) seeds.push_back(as_seed(j[i], child(path, i)));
  } else if (j.is_object()) {
    allow_keys(j, path, {"first", "count"});
    const Seed first = as_seed(required(j, path, "first"), child(path, "first"));
    const int count = int_or(j, path, "count", 0);
    if (count < 1) bad(child(path, "count"), "must be >= 1");
    for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<Seed>(i));
  } else {
    bad(path, "expected an array of seeds or {first, count}");
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (seeds[k] == seeds[i]) bad(child(path, i), "duplicate seed");
    }
  }
  return seeds;
}

// --- forward model -------------------------------------------------------

int square_side(int dim, const std::string& path) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
  if (side * side != dim) {
    bad(path, "needs a square image prior, but d = " + std::to_string(dim));
  }
  return side;
}

std::vector<std::uint8_t> parse_mask(const json& j, const std::string& path, int dim) {
  std::vector<std::uint8_t> mask;
  if (const json* m = find(j, "mask")) {
    const std::string mp = child(path, "mask");
    if (!m->is_array()) bad(mp, "expected an array of 0/1");
    if (static_cast<int>(m->size()) != dim) {
      bad(mp, "length " + std::to_string(m->size()) + " differs from d = " + std::to_string(dim));
    }
    for (std::size_t i = 0; i < m->size(); ++i) {
      const long long v = as_integer((*m)[i], child(mp, i));
      if (v != 0 && v != 1) bad(child(mp, i), "expected 0 or 1");
      mask.push_back(static_cast<std::uint8_t>(v));
    }
    if (find(j, "keep_fraction") != nullptr) bad(path, "give either mask or keep_fraction");
    return mask;
  }
  const std::string kp = child(path, "keep_fraction");
  const double keep = as_number(required(j, path, "keep_fraction"), kp);
  if (!(keep > 0.0 && keep <= 1.0)) bad(kp, "must lie in (0, 1]");
  const json* s = find(j, "mask_seed");
  Rng rng(s == nullptr ? 0 : as_seed(*s, child(path, "mask_seed")));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  mask.resize(static_cast<std::size_t>(dim));
  for (auto& v : mask) v = u(rng) < keep ? 1 : 0;
  return mask;
}

std::shared_ptr<const forward::ForwardModel> parse_model(const json& j, const std::string& path,
                                                         int dim, const fs::path& base,
                                                         std::string& kind_out) {
  object_at(j, path);
  const std::string kind = as_string(required(j, path, "kind"), child(path, "kind"));
  kind_out = kind;
  const std::string sp = child(path, "sigma_y");
  const double sigma_y = as_number(required(j, path, "sigma_y"), sp);
  if (!(sigma_y >= 0.0)) bad(sp, "must be non-negative");

  try {
    if (kind == "identity") {
      allow_keys(j, path, {"kind", "sigma_y"});
      return std::make_shared<forward::ForwardModel>(forward::make_identity(dim, sigma_y));
    }
    if (kind == "mask") {
      allow_keys(j, path, {"kind", "sigma_y", "mask", "keep_fraction", "mask_seed"});
      auto mask = parse_mask(j, path, dim);
      return std::make_shared<forward::ForwardModel>(forward::make_mask(std::move(mask), sigma_y));
    }
    if (kind == "downsample") {
      allow_keys(j, path, {"kind", "sigma_y", "factor"});
      const int side = square_side(dim, path);
      const int factor = int_or(j, path, "factor", 0);
      if (factor < 1 || side % factor != 0) {
        bad(child(path, "factor"), "must be a positive divisor of the image side");
      }
      return std::make_shared<forward::ForwardModel>(forward::make_downsample(side, factor, sigma_y));
    }
    if (kind == "blur") {
      allow_keys(j, path, {"kind", "sigma_y", "kernel_std", "kernel_side"});
      const int side = square_side(dim, path);
      const double std = as_number(required(j, path, "kernel_std"), child(path, "kernel_std"));
      if (!(std >= 0.0)) bad(child(path, "kernel_std"), "must be non-negative");
      const int ks = int_or(j, path, "kernel_side", 2 * static_cast<int>(std::ceil(3.0 * std)) + 1);
      if (ks < 1 || ks % 2 == 0) bad(child(path, "kernel_side"), "must be a positive odd integer");
      return std::make_shared<forward::ForwardModel>(forward::make_blur(side, std, ks, sigma_y));
    }
    if (kind == "quantize") {
      allow_keys(j, path, {"kind", "sigma_y", "levels"});
      const int levels = int_or(j, path, "levels", 0);
      if (levels < 2) bad(child(path, "levels"), "must be >= 2");
      return std::make_shared<forward::ForwardModel>(forward::make_quantize(dim, levels, sigma_y));
    }
    if (kind == "vlbi") {
      allow_keys(j, path, {"kind", "sigma_y", "telescopes", "epochs", "beta_cph", "beta_camp",
                           "rho", "y_flux"});
      forward::VlbiConfig c;
      c.grid_side = square_side(dim, path);
      const Matrix tel = as_matrix(required(j, path, "telescopes"), child(path, "telescopes"));
      if (tel.cols() != 2) bad(child(path, "telescopes"), "expected [u, v] pairs");
      for (Eigen::Index i = 0; i < tel.rows(); ++i) c.telescope_positions.push_back({tel(i, 0), tel(i, 1)});
      const Vector ep = as_vector(required(j, path, "epochs"), child(path, "epochs"));
      c.time_samples.assign(ep.data(), ep.data() + ep.size());
      c.beta_cph = positive(number_or(j, path, "beta_cph", c.beta_cph), child(path, "beta_cph"));
      c.beta_camp = positive(number_or(j, path, "beta_camp", c.beta_camp), child(path, "beta_camp"));
      c.rho = number_or(j, path, "rho", c.rho);
      c.y_flux = number_or(j, path, "y_flux", c.y_flux);
      return std::make_shared<forward::ForwardModel>(forward::make_vlbi(std::move(c), sigma_y));
    }
    if (kind == "navier_stokes") {
      allow_keys(j, path, {"kind", "sigma_y", "viscosity", "final_time", "dt", "downscale_factor",
                           "forcing_file"});
      forward::NsConfig c;
      c.grid_side = square_side(dim, path);
      c.viscosity = number_or(j, path, "viscosity", c.viscosity);
      c.final_time = number_or(j, path, "final_time", c.final_time);
      c.dt = number_or(j, path, "dt", c.dt);
      c.downscale_factor = int_or(j, path, "downscale_factor", c.downscale_factor);
      if (const json* f = find(j, "forcing_file")) {
        const std::string fp = child(path, "forcing_file");
        const fs::path p = resolve(base, as_string(*f, fp));
        if (!fs::is_regular_file(p)) bad(fp, "forcing file not found: " + p.string());
        c.forcing = forward::read_field(p);
        if (c.forcing.size() != dim) bad(fp, "forcing field size differs from d");
      }
      return std::make_shared<forward::ForwardModel>(forward::make_navier_stokes(std::move(c), sigma_y));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    bad(path, e.what());
  }
  bad(child(path, "kind"), "unknown forward model kind '" + kind + "'");
}

// --- ground truth --------------------------------------------------------

Vector parse_ground_truth(const json& j, const std::string& path, const fs::path& base,
                          const PriorSpec& prior, std::string& source) {
  object_at(j, path);
  allow_keys(j, path, {"file", "generator", "seed", "values"});
  const int n = (find(j, "file") != nullptr) + (find(j, "generator") != nullptr) +
                (find(j, "values") != nullptr);
  if (n != 1) bad(path, "give exactly one of file, generator, values");
  if (const json* f = find(j, "file")) {
    const fs::path p = resolve(base, as_string(*f, child(path, "file")));
    if (!fs::is_regular_file(p)) bad(child(path, "file"), "ground-truth file not found: " + p.string());
    source = "file:" + p.filename().string();
    try {
      return p.extension() == ".pgm" ? forward::read_pgm(p) : forward::read_field(p);
    } catch (const Error& e) {
      bad(child(path, "file"), e.what());
    }
  }
  if (const json* g = find(j, "generator")) {
    const std::string name = as_string(*g, child(path, "generator"));
    if (name != "prior_sample") bad(child(path, "generator"), "unknown generator '" + name + "'");
    if (!prior.gmm) bad(child(path, "generator"), "prior_sample needs a gmm prior");
    const Seed seed = find(j, "seed") == nullptr ? 0 : as_seed(j["seed"], child(path, "seed"));
    source = "prior_sample:" + std::to_string(seed);
    Rng rng(seed);
    return prior.gmm->sample(rng);
  }
  source = "values";
  return as_vector(j["values"], child(path, "values"));
}

std::vector<Metric> default_metrics(const std::string& kind) {
  if (kind == "navier_stokes") return {Metric::RelativeL2, Metric::TerminalCost};
  if (kind == "identity") return {Metric::RelativeL2, Metric::TerminalCost};
  return {Metric::Psnr, Metric::Bpsnr, Metric::RelativeL2, Metric::TerminalCost};
}

bool is_square(int dim) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
  return side * side == dim;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  const json root = parse_text(text, "config");
  object_at(root, "");
  allow_keys(root, "", {"prior", "schedule", "sampler", "seeds", "forward_model", "ground_truth",
                        "observation_seed", "output_dir", "metrics", "psnr_peak", "bpsnr",
                        "oracle", "diagnose", "field_format"});

  ExperimentConfig c;
  c.canonical_json = root.dump(2);
  c.prior = parse_prior(required(root, "", "prior"), "/prior", base_dir);
  c.schedule = find(root, "schedule") ? parse_schedule(root["schedule"], "/schedule") : ScheduleSpec{};
  c.sampler = find(root, "sampler") ? parse_sampler(root["sampler"], "/sampler") : sampler::SamplerConfig{};
  check_sampler(c.sampler);
  c.seeds = find(root, "seeds") ? parse_seeds(root["seeds"], "/seeds") : std::vector<Seed>{0};

  c.model = parse_model(required(root, "", "forward_model"), "/forward_model", c.prior.dim,
                        base_dir, c.model_kind);
  if (c.model->input_dim() != c.prior.dim) {
    bad("/forward_model", "input dimension " + std::to_string(c.model->input_dim()) +
                              " differs from prior dimension " + std::to_string(c.prior.dim));
  }

  c.ground_truth = parse_ground_truth(required(root, "", "ground_truth"), "/ground_truth", base_dir,
                                      c.prior, c.ground_truth_source);
  if (c.ground_truth.size() != c.prior.dim) {
    bad("/ground_truth", "dimension " + std::to_string(c.ground_truth.size()) +
                             " differs from prior dimension " + std::to_string(c.prior.dim));
  }
  if (const json* s = find(root, "observation_seed")) c.observation_seed = as_seed(*s, "/observation_seed");

  c.output_dir = find(root, "output_dir") ? fs::path(as_string(root["output_dir"], "/output_dir"))
                                          : fs::path("cps_out");

  if (const json* m = find(root, "metrics")) {
    if (!m->is_array()) bad("/metrics", "expected an array of metric names");
    for (std::size_t i = 0; i < m->size(); ++i) {
      const std::string name = as_string((*m)[i], child("/metrics", i));
      const auto metric = parse_metric(name);
      if (!metric) bad(child("/metrics", i), "unknown metric '" + name + "'");
      c.metrics.push_back(*metric);
    }
  } else {
    c.metrics = default_metrics(c.model_kind);
  }
  for (std::size_t i = 0; i < c.metrics.size(); ++i) {
    const Metric m = c.metrics[i];
    if ((m == Metric::Psnr || m == Metric::Bpsnr) && c.model_kind == "navier_stokes") {
      bad(child("/metrics", i), "psnr metrics are not emitted for vorticity fields");
    }
    if (m == Metric::Bpsnr && !is_square(c.prior.dim)) {
      bad(child("/metrics", i), "bpsnr needs a square image");
    }
  }

  c.psnr_peak = positive(number_or(root, "", "psnr_peak", c.psnr_peak), "/psnr_peak");
  if (const json* b = find(root, "bpsnr")) {
    object_at(*b, "/bpsnr");
    allow_keys(*b, "/bpsnr", {"std", "kernel_side"});
    c.bpsnr_std = number_or(*b, "/bpsnr", "std", c.bpsnr_std);
    c.bpsnr_side = int_or(*b, "/bpsnr", "kernel_side", c.bpsnr_side);
    if (!(c.bpsnr_std >= 0.0)) bad("/bpsnr/std", "must be non-negative");
    if (c.bpsnr_side < 1 || c.bpsnr_side % 2 == 0) bad("/bpsnr/kernel_side", "must be a positive odd integer");
  }
  if (const json* o = find(root, "oracle")) {
    object_at(*o, "/oracle");
    allow_keys(*o, "/oracle", {"grid_points"});
    c.oracle_grid_points = int_or(*o, "/oracle", "grid_points", 0);
    if (c.oracle_grid_points != 0 && c.oracle_grid_points < 2) bad("/oracle/grid_points", "must be >= 2");
  }
  if (const json* d = find(root, "diagnose")) {
    object_at(*d, "/diagnose");
    allow_keys(*d, "/diagnose", {"selection", "k"});
    if (const json* s = find(*d, "selection")) {
      const std::string name = as_string(*s, "/diagnose/selection");
      if (name == "top") {
        c.diagnose.kind = sampler::RankSelection::Kind::Top;
      } else if (name == "bottom_reversed") {
        c.diagnose.kind = sampler::RankSelection::Kind::BottomReversed;
      } else {
        bad("/diagnose/selection", "expected top or bottom_reversed");
      }
    }
    c.diagnose.k = int_or(*d, "/diagnose", "k", 1);
    if (c.diagnose.k < 1 || c.diagnose.k > c.sampler.num_particles) {
      bad("/diagnose/k", "must lie in [1, num_particles]");
    }
  }

  const bool image_kind = c.model_kind != "navier_stokes" && c.model_kind != "identity";
  c.field_format = image_kind && is_square(c.prior.dim) ? FieldFormat::Pgm : FieldFormat::Cpsf;
  if (const json* f = find(root, "field_format")) {
    const std::string name = as_string(*f, "/field_format");
    if (name == "pgm") {
      if (!is_square(c.prior.dim)) bad("/field_format", "pgm needs a square image");
      c.field_format = FieldFormat::Pgm;
    } else if (name == "cpsf") {
      c.field_format = FieldFormat::Cpsf;
    } else {
      bad("/field_format", "expected pgm or cpsf");
    }
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) fail(ErrorCode::Config, "config file not found: " + path.string());
  ExperimentConfig c = parse_config(read_text(path), path.parent_path());
  c.source = path;
  return c;
}

void apply_overrides(ExperimentConfig& config, const Overrides& overrides) {
  if (overrides.seed) config.seeds = {*overrides.seed};
  if (overrides.output_dir) config.output_dir = *overrides.output_dir;
  if (overrides.method) config.sampler.method = *overrides.method;
  check_sampler(config.sampler);
}

ServerConfig load_server_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) fail(ErrorCode::Config, "config file not found: " + path.string());
  const json root = parse_text(read_text(path), path.string());
  object_at(root, "");
  const json& p = required(root, "", "prior");
  object_at(p, "/prior");
  if (as_string(required(p, "/prior", "type"), "/prior/type") != "gmm") {
    bad("/prior/type", "the denoiser server needs a gmm prior");
  }
  return ServerConfig{parse_gmm(p, "/prior"),
                      find(root, "schedule") ? parse_schedule(root["schedule"], "/schedule")
                                             : ScheduleSpec{}};
}

prior::DenoiserHandle make_denoiser(const PriorSpec& spec) {
  if (spec.gmm) return prior::DenoiserHandle::analytic(*spec.gmm);
  return prior::DenoiserHandle::external(prior::ExternalDenoiser::spawn(spec.command, spec.dim));
}

}  // namespace cps::harness
