#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "cps/sampler.hpp"
#include "test_support.hpp"

namespace {

using namespace cps;
using namespace cps::sampler;
using cps::testing::make_toy;
using cps::testing::median;

template <class F>
Error error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected cps::Error";
  return Error(ErrorCode::InvalidArgument, "none");
}

SamplerConfig config(int n, int restarts, double fraction, Seed seed) {
  SamplerConfig c;
  c.num_particles = n;
  c.num_restarts = restarts;
  c.restart_fraction = fraction;
  c.rng_seed = seed;
  return c;
}

bool same_bits(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_trace(const RunRecord& a, const RunRecord& b) {
  if (a.trace.size() != b.trace.size()) return false;
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    const auto& x = a.trace[i];
    const auto& y = b.trace[i];
    auto eq = [](double u, double v) { return std::memcmp(&u, &v, sizeof u) == 0; };
    if (x.step_index != y.step_index || x.restart != y.restart || x.fallback != y.fallback ||
        !eq(x.terminal_cost, y.terminal_cost) || !eq(x.constraint_residual, y.constraint_residual) ||
        !eq(x.jensen_gap, y.jensen_gap)) {
      return false;
    }
  }
  return true;
}

TEST(SamplerConfig, Validation) {
  SamplerConfig c = config(1, 1, 0.0, 0);
  EXPECT_EQ(error_of([&] { validate(c); }).code(), ErrorCode::InvalidArgument);
  c.method = Method::Scg;
  EXPECT_NO_THROW(validate(c));
  c.method = Method::Unconditional;
  EXPECT_NO_THROW(validate(c));
  c.num_restarts = 0;
  EXPECT_EQ(error_of([&] { validate(c); }).code(), ErrorCode::InvalidArgument);
  c.num_restarts = 1;
  c.restart_fraction = 1.5;
  EXPECT_EQ(error_of([&] { validate(c); }).code(), ErrorCode::InvalidArgument);
  EXPECT_EQ(restart_window(config(2, 5, 0.2, 0), 500), 100);
  EXPECT_EQ(restart_window(config(2, 5, 0.0, 0), 500), 0);
  EXPECT_EQ(restart_window(config(2, 5, 1.0, 0), 7), 7);
  EXPECT_EQ(parse_method("scg"), Method::Scg);
  EXPECT_FALSE(parse_method("dps").has_value());
}

TEST(RunCps, IdentityLandsAtObservedMode) {
  const auto toy = make_toy(2, 200);
  int near = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto rec = run_cps(config(64, 5, 0.2, static_cast<Seed>(seed)), toy.schedule,
                             toy.denoiser, toy.model, toy.observation(seed));
    if ((rec.final_sample - toy.mode).norm() < 3.0 * toy.component_std) ++near;
  }
  EXPECT_GE(near, 18);
}

TEST(RunCps, ForwardCallBudgetOfReferenceConfiguration) {
  const auto toy = make_toy(1, 500);
  const auto rec = run_cps(config(64, 5, 0.2, 3), toy.schedule, toy.denoiser, toy.model,
                           toy.observation(3));
  EXPECT_EQ(rec.forward_calls, 57600);
  EXPECT_EQ(rec.trace.size(), 100u * 5u + 400u);
}

TEST(RunCps, FinalStepIsDeterministicDenoise) {
  const auto toy = make_toy(3, 30);
  Vector x1;
  const auto rec = run_cps(config(8, 1, 0.0, 5), toy.schedule, toy.denoiser, toy.model,
                           toy.observation(5), [&](const StepView& v) {
                             if (v.step_index == 1 && v.restart == 1) x1 = v.chosen;
                           });
  ASSERT_EQ(x1.size(), 3);
  EXPECT_TRUE(same_bits(rec.final_sample, prior::denoise(toy.denoiser, toy.schedule, x1, 1)));
  EXPECT_EQ(rec.trace.back().step_index, 0);
  EXPECT_TRUE(std::isnan(rec.trace.back().jensen_gap));
}

TEST(RunCps, AccountingAndSphereConstraint) {
  const auto toy = make_toy(4, 40);
  const auto c = config(16, 3, 0.25, 9);
  const auto rec = run_cps(c, toy.schedule, toy.denoiser, toy.model, toy.observation(9));
  // 10 restart steps x 3 passes + 30 single passes
  EXPECT_EQ(rec.trace.size(), 60u);
  EXPECT_EQ(rec.forward_calls, 16 * 60);
  EXPECT_EQ(rec.surrogate_fits, 60 - 1);
  EXPECT_EQ(rec.diagnostic_calls, 60 - 1);
  for (const auto& e : rec.trace) {
    if (e.step_index > 0 && !e.fallback) {
      EXPECT_LE(e.constraint_residual, 1e-9);
    }
  }
  // restarts count down within a step
  EXPECT_EQ(rec.trace[0].step_index, 39);
  EXPECT_EQ(rec.trace[0].restart, 3);
  EXPECT_EQ(rec.trace[2].restart, 1);
  EXPECT_EQ(rec.trace[3].step_index, 38);
}

TEST(RunCps, RestartAblationIdentities) {
  const auto toy = make_toy(3, 25);
  const Vector y = toy.observation(2);
  const auto none = run_cps(config(8, 4, 0.0, 2), toy.schedule, toy.denoiser, toy.model, y);
  EXPECT_EQ(none.trace.size(), 25u);
  EXPECT_EQ(none.surrogate_fits, 24);  // the sigma = 0 step fits nothing
  const auto single = run_cps(config(8, 1, 0.6, 2), toy.schedule, toy.denoiser, toy.model, y);
  EXPECT_TRUE(same_trace(none, single));
  EXPECT_TRUE(same_bits(none.final_sample, single.final_sample));
}

TEST(RunCps, BitReproducible) {
  const auto toy = make_toy(5, 30);
  const Vector y = toy.observation(1);
  const auto a = run_cps(config(12, 3, 0.2, 77), toy.schedule, toy.denoiser, toy.model, y);
  const auto b = run_cps(config(12, 3, 0.2, 77), toy.schedule, toy.denoiser, toy.model, y);
  EXPECT_TRUE(same_trace(a, b));
  EXPECT_TRUE(same_bits(a.final_sample, b.final_sample));
  const auto c = run_cps(config(12, 3, 0.2, 78), toy.schedule, toy.denoiser, toy.model, y);
  EXPECT_FALSE(same_bits(a.final_sample, c.final_sample));
}

TEST(RunCps, ErrorsCarryPosition) {
  const auto toy = make_toy(2, 10);
  int calls = 0;
  const auto bad = forward::make_custom(2, 2, [&](const Vector& x) -> Vector {
    if (++calls > 30) throw std::runtime_error("solver blew up");
    return x;
  }, 0.05);
  const Error e = error_of([&] {
    run_cps(config(8, 1, 0.0, 0), toy.schedule, toy.denoiser, bad, toy.observation(0));
  });
  EXPECT_EQ(e.code(), ErrorCode::ModelFailure);
  EXPECT_NE(std::string(e.what()).find("at step"), std::string::npos);
  EXPECT_NE(std::string(e.what()).find("solver blew up"), std::string::npos);

  const auto wrong = forward::make_identity(3, 0.05);
  EXPECT_EQ(error_of([&] {
              run_cps(config(8, 1, 0.0, 0), toy.schedule, toy.denoiser, wrong, Vector::Zero(3));
            }).code(),
            ErrorCode::DimensionMismatch);
}

TEST(RunCps, ConstantModelFallsBackToSphereDraws) {
  const auto toy = make_toy(3, 12);
  const auto flat = forward::make_custom(3, 2, [](const Vector&) { return Vector(Vector::Ones(2)); }, 0.1);
  const auto rec = run_cps(config(8, 1, 0.0, 4), toy.schedule, toy.denoiser, flat, Vector::Zero(2));
  EXPECT_EQ(rec.fallbacks, 11);
  for (const auto& e : rec.trace) {
    if (e.step_index > 0) {
      EXPECT_TRUE(e.fallback);
      EXPECT_LE(e.constraint_residual, 1e-9);
    }
  }
}

TEST(RunScg, SingleParticleIsUnconditional) {
  const auto toy = make_toy(3, 30);
  auto c = config(1, 1, 0.0, 12);
  const auto scg = run_scg(c, toy.schedule, toy.denoiser, toy.model, toy.observation(12));
  const auto unc = run_unconditional(c, toy.schedule, toy.denoiser);
  EXPECT_TRUE(same_bits(scg.final_sample, unc.final_sample));
  EXPECT_EQ(scg.trace.size(), unc.trace.size());
}

TEST(RunScg, ChoosesAmongCandidatesWhileCpsDoesNot) {
  const auto toy = make_toy(4, 20);
  const Vector y = toy.observation(6);
  int scg_members = 0;
  int scg_steps = 0;
  run_scg(config(8, 1, 0.0, 6), toy.schedule, toy.denoiser, toy.model, y, [&](const StepView& v) {
    ++scg_steps;
    for (Eigen::Index i = 0; i < v.candidates.cols(); ++i) {
      if (same_bits(v.candidates.col(i), v.chosen)) {
        ++scg_members;
        break;
      }
    }
  });
  EXPECT_EQ(scg_members, scg_steps);

  int cps_members = 0;
  int cps_steps = 0;
  run_cps(config(8, 1, 0.0, 6), toy.schedule, toy.denoiser, toy.model, y, [&](const StepView& v) {
    if (v.fit == nullptr) return;
    ++cps_steps;
    for (Eigen::Index i = 0; i < v.candidates.cols(); ++i) {
      if (same_bits(v.candidates.col(i), v.chosen)) ++cps_members;
    }
  });
  EXPECT_EQ(cps_steps, 19);
  EXPECT_EQ(cps_members, 0);
}

TEST(RunScg, AccountingAndNoRestart) {
  const auto toy = make_toy(2, 15);
  const auto rec = run_scg(config(6, 5, 0.5, 1), toy.schedule, toy.denoiser, toy.model,
                           toy.observation(1));
  EXPECT_EQ(rec.trace.size(), 15u);
  EXPECT_EQ(rec.forward_calls, 6 * 15);
  EXPECT_EQ(rec.surrogate_fits, 0);
  EXPECT_EQ(rec.diagnostic_calls, 0);
}

// Toy comparison at d = 8, T = 20 (see the README on why not d = 2).
TEST(RunScg, LosesToCpsAtEightParticles) {
  const auto toy = make_toy(8, 20);
  std::vector<double> cps_costs, scg_costs;
  for (int seed = 0; seed < 20; ++seed) {
    const auto c = config(8, 1, 0.0, static_cast<Seed>(seed));
    const Vector y = toy.observation(seed);
    cps_costs.push_back(run_cps(c, toy.schedule, toy.denoiser, toy.model, y).final_cost);
    scg_costs.push_back(run_scg(c, toy.schedule, toy.denoiser, toy.model, y).final_cost);
  }
  EXPECT_GT(median(scg_costs), median(cps_costs));
}

TEST(RunCps, MedianCostNonIncreasingInParticles) {
  const auto toy = make_toy(8, 20);
  std::vector<double> medians;
  for (int n : {8, 16, 32, 64}) {
    std::vector<double> costs;
    for (int seed = 0; seed < 20; ++seed) {
      costs.push_back(run_cps(config(n, 1, 0.0, static_cast<Seed>(seed)), toy.schedule,
                              toy.denoiser, toy.model, toy.observation(seed))
                          .final_cost);
    }
    medians.push_back(median(costs));
  }
  for (std::size_t i = 1; i < medians.size(); ++i) EXPECT_LE(medians[i], medians[i - 1]) << i;
}

TEST(RunUnconditional, SampleMeanMatchesPrior) {
  Vector m(2);
  m << 1.5, -0.5;
  Matrix c(2, 2);
  c << 0.5, 0.1, 0.1, 0.3;
  const auto gmm = prior::GmmPrior::full({1.0}, {m}, {c});
  const auto den = prior::DenoiserHandle::analytic(gmm);
  const auto sched = prior::build_schedule(1000, 1e-4, 0.02);
  Vector sum = Vector::Zero(2);
  for (int seed = 0; seed < 200; ++seed) {
    sum += run_unconditional(config(1, 1, 0.0, static_cast<Seed>(seed)), sched, den).final_sample;
  }
  const double cnorm = Eigen::SelfAdjointEigenSolver<Matrix>(c).eigenvalues().maxCoeff();
  EXPECT_LT((sum / 200.0 - m).norm(), 4.0 * std::sqrt(cnorm) / std::sqrt(200.0) * std::sqrt(2.0));
}

TEST(RunUnconditional, TwoStepChainMatchesAnalyticComposition) {
  const double m = 0.7;
  const double c = 0.3;
  const auto gmm = prior::GmmPrior::isotropic_gaussian(Vector::Constant(1, m), c);
  const auto den = prior::DenoiserHandle::analytic(gmm);
  const auto sched = prior::build_schedule(2, 0.2, 0.6);
  const double a1 = 1.0 - 0.2;
  const double a2 = a1 * (1.0 - 0.6);
  // Conjugate posterior mean of x0 given x_t, and the DDIM step, written out
  // independently of the library.
  auto x0hat = [&](double x, double a) {
    return m + c * std::sqrt(a) / (a * c + 1.0 - a) * (x - std::sqrt(a) * m);
  };
  const double s1 = std::sqrt((1 - a1) / (1 - a2)) * std::sqrt(1 - a2 / a1);
  auto mu1 = [&](double x2) {
    const double h = x0hat(x2, a2);
    return std::sqrt(a1) * h + std::sqrt(1 - a1 - s1 * s1) * (x2 - std::sqrt(a2) * h) / std::sqrt(1 - a2);
  };
  const double p = mu1(0.0);
  const double q = mu1(1.0) - p;
  const double k1 = x0hat(1.0, a1) - x0hat(0.0, a1);
  const double mean = x0hat(p, a1);
  const double sd = std::abs(k1) * std::sqrt(q * q + s1 * s1);

  const int runs = 10000;
  std::vector<double> xs;
  for (int seed = 0; seed < runs; ++seed) {
    xs.push_back(run_unconditional(config(1, 1, 0.0, static_cast<Seed>(seed)), sched, den)
                     .final_sample[0]);
  }
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  for (int i = 0; i < runs; ++i) {
    const double f = 0.5 * std::erfc(-(xs[static_cast<std::size_t>(i)] - mean) / (sd * std::sqrt(2.0)));
    ks = std::max({ks, std::abs(f - double(i) / runs), std::abs(f - double(i + 1) / runs)});
  }
  EXPECT_LT(ks, 1.628 / std::sqrt(double(runs)));  // KS critical value at 1%
}

TEST(RunUnconditional, BitReproducibleAndUnguided) {
  const auto toy = make_toy(3, 20);
  const auto a = run_unconditional(config(1, 1, 0.0, 4), toy.schedule, toy.denoiser);
  const auto b = run_unconditional(config(1, 1, 0.0, 4), toy.schedule, toy.denoiser);
  EXPECT_TRUE(same_bits(a.final_sample, b.final_sample));
  EXPECT_EQ(a.forward_calls, 0);
  EXPECT_TRUE(std::isnan(a.final_cost));
  for (const auto& e : a.trace) EXPECT_TRUE(std::isnan(e.terminal_cost));
}

TEST(ParticleDiagnostic, TopOneIsScg) {
  const auto toy = make_toy(4, 20);
  const Vector y = toy.observation(3);
  const auto c = config(8, 1, 0.0, 3);
  const auto scg = run_scg(c, toy.schedule, toy.denoiser, toy.model, y);
  const auto top = particle_diagnostic({RankSelection::Kind::Top, 1}, c, toy.schedule, toy.denoiser,
                                       toy.model, y);
  EXPECT_TRUE(same_bits(scg.final_sample, top.final_sample));
  EXPECT_TRUE(same_trace(scg, top));
}

TEST(ParticleDiagnostic, BottomReversedBeatsUnconditional) {
  const auto toy = make_toy(8, 20);
  std::vector<double> diag, unc;
  for (int seed = 0; seed < 20; ++seed) {
    const auto c = config(8, 1, 0.0, static_cast<Seed>(seed));
    const Vector y = toy.observation(seed);
    diag.push_back(particle_diagnostic({RankSelection::Kind::BottomReversed, 1}, c, toy.schedule,
                                       toy.denoiser, toy.model, y)
                       .final_cost);
    unc.push_back(forward::terminal_cost(toy.model, y,
                                         run_unconditional(c, toy.schedule, toy.denoiser).final_sample));
  }
  EXPECT_LT(median(diag), median(unc));
}

TEST(ParticleDiagnostic, RankBeyondParticlesRejected) {
  const auto toy = make_toy(2, 5);
  EXPECT_EQ(error_of([&] {
              particle_diagnostic({RankSelection::Kind::Top, 9}, config(8, 1, 0.0, 0), toy.schedule,
                                  toy.denoiser, toy.model, toy.observation(0));
            }).code(),
            ErrorCode::InvalidSelection);
}

TEST(ParticleDiagnostic, ReversedStepLeavesTheCandidateSet) {
  const auto toy = make_toy(2, 10);
  const Vector y = toy.observation(1);
  int checked = 0;
  particle_diagnostic({RankSelection::Kind::BottomReversed, 1}, config(6, 1, 0.0, 1), toy.schedule,
                      toy.denoiser, toy.model, y, [&](const StepView& v) {
                        if (v.step_index == 0) return;
                        for (Eigen::Index i = 0; i < v.candidates.cols(); ++i) {
                          EXPECT_FALSE(same_bits(v.candidates.col(i), v.chosen));
                        }
                        ++checked;
                      });
  EXPECT_EQ(checked, 9);
}

}  // namespace
