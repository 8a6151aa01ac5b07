#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>

#include "cps/prior/denoiser.hpp"
#include "cps/prior/gmm.hpp"
#include "cps/prior/schedule.hpp"
#include "cps/prior/wire.hpp"
#include "test_support.hpp"

namespace {

using namespace cps;
using namespace cps::prior;
using cps::testing::Gen;

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected cps::Error";
  return ErrorCode::InvalidArgument;
}

// ---------------------------------------------------------------- schedule

TEST(Schedule, ConstantBetaCumulativeProduct) {
  const auto s = build_schedule(2, 0.5, 0.5, 1.0);
  ASSERT_EQ(s.num_steps(), 2);
  EXPECT_EQ(s.beta(1), 0.5);
  EXPECT_EQ(s.beta(2), 0.5);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  EXPECT_EQ(s.alpha_bar(1), 0.5);
  EXPECT_EQ(s.alpha_bar(2), 0.25);
}

TEST(Schedule, DefaultRampEndsBelowOnePercent) {
  const auto s = build_schedule(500, 1e-4, 0.02, 1.0);
  // product of (1 - beta) computed with numpy
  EXPECT_NEAR(s.alpha_bar(500), 0.0063527107970150608, 1e-15);
  EXPECT_LT(s.alpha_bar(500), 1e-2);
}

TEST(Schedule, RejectsInvalidRanges) {
  EXPECT_EQ(code_of([] { build_schedule(1, 0.1, 0.2, 1.0); }), ErrorCode::InvalidRange);
  EXPECT_EQ(code_of([] { build_schedule(10, 0.0, 0.2, 1.0); }), ErrorCode::InvalidRange);
  EXPECT_EQ(code_of([] { build_schedule(10, 0.3, 0.2, 1.0); }), ErrorCode::InvalidRange);
  EXPECT_EQ(code_of([] { build_schedule(10, 0.1, 1.0, 1.0); }), ErrorCode::InvalidRange);
  EXPECT_EQ(code_of([] { build_schedule(10, 0.1, 0.2, 1.5); }), ErrorCode::InvalidRange);
}

TEST(Schedule, AlphaBarStrictlyDecreasingProperty) {
  Gen g(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = g.integer(2, 1200);
    const double lo = g.uniform(1e-6, 0.05);
    const double hi = g.uniform(lo, 0.5);
    const auto s = build_schedule(t, lo, hi, g.uniform(0.0, 1.0));
    double prev = s.alpha_bar(0);
    for (int i = 1; i <= t; ++i) {
      ASSERT_LT(s.alpha_bar(i), prev) << "T=" << t << " i=" << i;
      ASSERT_GT(s.alpha_bar(i), 0.0);
      ASSERT_GT(s.beta(i), 0.0);
      ASSERT_LT(s.beta(i), 1.0);
      prev = s.alpha_bar(i);
    }
  }
}

TEST(Schedule, IndexChecks) {
  const auto s = build_schedule(4, 0.1, 0.2);
  EXPECT_EQ(code_of([&] { s.beta(0); }), ErrorCode::IndexOutOfRange);
  EXPECT_EQ(code_of([&] { s.beta(5); }), ErrorCode::IndexOutOfRange);
  EXPECT_EQ(code_of([&] { s.alpha_bar(5); }), ErrorCode::IndexOutOfRange);
}

// ---------------------------------------------------------- reverse kernel

TEST(ReverseKernel, ZeroStochasticityIsDeterministic) {
  Gen g(3);
  const auto s = build_schedule(50, 1e-3, 0.05, 0.0);
  for (int t = 1; t <= 50; ++t) {
    const auto k = reverse_kernel(s, g.vector(4), g.vector(4), t);
    EXPECT_EQ(k.sigma, 0.0);
    EXPECT_EQ(k.step_index, t - 1);
  }
}

TEST(ReverseKernel, TwoStepHandEvaluation) {
  const auto s = build_schedule(2, 0.5, 0.5, 1.0);
  const Vector zero = Vector::Zero(3);
  const auto k = reverse_kernel(s, zero, zero, 2);
  // sqrt((1 - 0.5)/(1 - 0.25)) * sqrt(1 - 0.25/0.5) = sqrt(1/3)
  EXPECT_NEAR(k.sigma, 0.57735026918962573, 1e-15);
  EXPECT_EQ(k.mu, zero);
  EXPECT_EQ(k.step_index, 1);
  // Into the clean state the kernel collapses.
  const auto last = reverse_kernel(s, zero, zero, 1);
  EXPECT_EQ(last.sigma, 0.0);
}

TEST(ReverseKernel, MeanMatchesFormula) {
  const auto s = build_schedule(2, 0.5, 0.5, 1.0);
  Vector xn(2), x0(2);
  xn << 1.0, -2.0;
  x0 << 0.5, 0.25;
  const auto k = reverse_kernel(s, xn, x0, 2);
  const double a = 0.5, an = 0.25, sig2 = 1.0 / 3.0;
  const Vector want =
      std::sqrt(a) * x0 + std::sqrt(1 - a - sig2) * (xn - std::sqrt(an) * x0) / std::sqrt(1 - an);
  EXPECT_LT((k.mu - want).norm(), 1e-15);
}

TEST(ReverseKernel, OutOfRange) {
  const auto s = build_schedule(2, 0.5, 0.5, 1.0);
  const Vector z = Vector::Zero(1);
  EXPECT_EQ(code_of([&] { reverse_kernel(s, z, z, 3); }), ErrorCode::IndexOutOfRange);
  EXPECT_EQ(code_of([&] { reverse_kernel(s, z, z, 0); }), ErrorCode::IndexOutOfRange);
}

// ----------------------------------------------------------- forward noise

TEST(ForwardNoise, TinyBetaKeepsInput) {
  const auto s = build_schedule(10, 1e-30, 1e-30);
  Vector x(3);
  x << 0.3, -1.0, 2.0;
  EXPECT_LT((forward_noise(s, x, 0, 9) - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ForwardNoise, SeedDeterminism) {
  const auto s = build_schedule(10, 1e-3, 0.2);
  const Vector x = Vector::Constant(5, 0.5);
  const Vector a = forward_noise(s, x, 3, 77);
  const Vector b = forward_noise(s, x, 3, 77);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * 5), 0);
  EXPECT_NE(a, forward_noise(s, x, 3, 78));
}

TEST(ForwardNoise, MeanAndVarianceOfManyDraws) {
  const auto s = build_schedule(10, 0.01, 0.3);
  const int d = 4;
  const int draws = 100000;
  const double beta = s.beta(5);
  Vector sum = Vector::Zero(d);
  Vector sq = Vector::Zero(d);
  for (int i = 0; i < draws; ++i) {
    const Vector v = forward_noise(s, Vector::Zero(d), 4, static_cast<Seed>(i));
    sum += v;
    sq += v.cwiseProduct(v);
  }
  const Vector mean = sum / draws;
  EXPECT_LT(mean.norm(), 4.0 * std::sqrt(beta / draws) * std::sqrt(double(d)));
  for (int j = 0; j < d; ++j) {
    const double var = sq[j] / draws - mean[j] * mean[j];
    EXPECT_NEAR(var / beta, 1.0, 0.05);
  }
}

TEST(ForwardNoise, OutOfRange) {
  const auto s = build_schedule(4, 0.1, 0.2);
  const Vector z = Vector::Zero(2);
  EXPECT_EQ(code_of([&] { forward_noise(s, z, 4, 0); }), ErrorCode::IndexOutOfRange);
  EXPECT_EQ(code_of([&] { forward_noise(s, z, -1, 0); }), ErrorCode::IndexOutOfRange);
}

// --------------------------------------------------------------------- gmm

TEST(Gmm, WeightsMustSumToOne) {
  const Vector m = Vector::Zero(2);
  const Vector v = Vector::Ones(2);
  EXPECT_EQ(code_of([&] { GmmPrior::diagonal({0.5, 0.4}, {m, m}, {v, v}); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { GmmPrior::diagonal({1.5, -0.5}, {m, m}, {v, v}); }),
            ErrorCode::InvalidArgument);
  EXPECT_NO_THROW(GmmPrior::diagonal({0.25, 0.75}, {m, m}, {v, v}));
}

TEST(Gmm, RejectsIndefiniteCovariance) {
  Matrix c(2, 2);
  c << 1.0, 2.0, 2.0, 1.0;
  EXPECT_EQ(code_of([&] { GmmPrior::full({1.0}, {Vector::Zero(2)}, {c}); }),
            ErrorCode::InvalidArgument);
  Matrix asym(2, 2);
  asym << 2.0, 0.5, 0.1, 2.0;
  EXPECT_EQ(code_of([&] { GmmPrior::full({1.0}, {Vector::Zero(2)}, {asym}); }),
            ErrorCode::InvalidArgument);
}

TEST(Denoise, StandardNormalShrinksBySqrtAlphaBar) {
  const auto gmm = GmmPrior::isotropic_gaussian(Vector::Zero(2), 1.0);
  Vector x(2);
  x << 2.0, 0.0;
  const Vector out = gmm.posterior_mean(x, 0.25);
  EXPECT_NEAR(out[0], 1.0, 1e-15);
  EXPECT_NEAR(out[1], 0.0, 1e-15);
}

TEST(Denoise, TwoSharpModes) {
  const Vector m = Vector::Constant(1, 10.0);
  const Vector v = Vector::Constant(1, 1e-6);
  const auto gmm = GmmPrior::diagonal({0.5, 0.5}, {m, Vector(-m)}, {v, v});
  Vector x(1);
  x << std::sqrt(0.5) * 10.0 + 0.01;
  // quadrature of the 1-D posterior over both modes (mpmath, 40 digits)
  EXPECT_NEAR(gmm.posterior_mean(x, 0.5)[0], 10.000000014142121482, 1e-12);
  EXPECT_NEAR(gmm.posterior_mean(x, 0.5)[0], 10.0, 1e-6);
}

TEST(Denoise, NoiselessLimitReturnsInput) {
  Gen g(5);
  const auto gmm = GmmPrior::diagonal({0.3, 0.7}, {g.vector(3), g.vector(3)},
                                      {Vector::Constant(3, 0.5), Vector::Constant(3, 2.0)});
  const Vector x = g.vector(3);
  EXPECT_LT((gmm.posterior_mean(x, 1.0 - 1e-12) - x).norm(), 1e-9);
}

TEST(Denoise, ExtremeResponsibilitiesStayFinite) {
  const Vector m = Vector::Constant(2, 50.0);
  const Vector v = Vector::Constant(2, 1e-8);
  const auto gmm = GmmPrior::diagonal({0.5, 0.5}, {m, Vector(-m)}, {v, v});
  const Vector out = gmm.posterior_mean(Vector::Constant(2, 3.0), 0.9);
  EXPECT_TRUE(out.allFinite());
  // The +50 component takes all the mass; its conditional mean is
  // m + v sqrt(a) / (a v + 1 - a) (x - sqrt(a) m).
  const double a = 0.9;
  const double want = 50.0 + 1e-8 * std::sqrt(a) / (a * 1e-8 + 1 - a) * (3.0 - std::sqrt(a) * 50.0);
  EXPECT_NEAR(out[0], want, 1e-12);
}

TEST(Denoise, GaussianClosedFormMatchesMonteCarlo) {
  Gen g(21);
  Matrix l = g.matrix(2, 2);
  const Matrix c = l * l.transpose() + 0.5 * Matrix::Identity(2, 2);
  Vector m(2);
  m << 0.5, -1.0;
  const auto gmm = GmmPrior::full({1.0}, {m}, {c});
  const Eigen::LLT<Matrix> chol(c);
  const Matrix lc = chol.matrixL();
  struct Case {
    double alpha_bar;
    Vector x;
  };
  const std::vector<Case> cases = {{0.9, g.vector(2)}, {0.5, g.vector(2)}, {0.1, g.vector(2)}};
  // Importance-weighted estimate of E[x0 | x_t] from prior draws.
  for (const auto& cs : cases) {
    const double a = cs.alpha_bar;
    const int draws = 1000000;
    Vector num = Vector::Zero(2);
    Vector num2 = Vector::Zero(2);
    double den = 0.0;
    double den2 = 0.0;
    Rng rng(99);
    for (int i = 0; i < draws; ++i) {
      const Vector x0 = m + lc * standard_normal(2, rng);
      const double r = (cs.x - std::sqrt(a) * x0).squaredNorm();
      const double w = std::exp(-0.5 * r / (1.0 - a));
      num += w * x0;
      num2 += w * x0.cwiseProduct(x0);
      den += w;
      den2 += w * w;
    }
    const Vector est = num / den;
    const Vector exact = gmm.posterior_mean(cs.x, a);
    const double ess = den * den / den2;
    for (int j = 0; j < 2; ++j) {
      const double var = num2[j] / den - est[j] * est[j];
      const double se = std::sqrt(var / ess);
      EXPECT_LT(std::abs(est[j] - exact[j]), 3.0 * se) << "alpha_bar=" << a;
    }
  }
}

TEST(Denoise, DimensionMismatch) {
  const auto h = DenoiserHandle::analytic(GmmPrior::isotropic_gaussian(Vector::Zero(3), 1.0));
  const auto s = build_schedule(4, 0.1, 0.2);
  EXPECT_EQ(code_of([&] { denoise(h, s, Vector::Zero(2), 2); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(h.kind(), DenoiserKind::AnalyticGmm);
  EXPECT_NE(h.prior(), nullptr);
}

TEST(Gmm, SampleMomentsAndLogDensity) {
  const auto gmm = GmmPrior::isotropic_gaussian(Vector::Constant(2, 3.0), 4.0);
  Rng rng(1);
  Vector sum = Vector::Zero(2);
  for (int i = 0; i < 20000; ++i) sum += gmm.sample(rng);
  EXPECT_LT((sum / 20000 - Vector::Constant(2, 3.0)).norm(), 0.1);
  const double lp = gmm.log_density(Vector::Constant(2, 3.0));
  EXPECT_NEAR(lp, -std::log(2.0 * M_PI * 4.0), 1e-12);
  EXPECT_EQ(gmm.marginal_variance(), Vector::Constant(2, 4.0));
}

// -------------------------------------------------------------------- wire

class MemoryStream : public ByteStream {
 public:
  void write_all(std::span<const std::byte> bytes) override {
    buf.insert(buf.end(), bytes.begin(), bytes.end());
  }
  bool read_exact(std::span<std::byte> out) override {
    if (out.empty()) return true;
    if (buf.empty()) return false;
    if (buf.size() < out.size()) fail(ErrorCode::Protocol, "eof mid-frame");
    for (auto& b : out) {
      b = buf.front();
      buf.pop_front();
    }
    return true;
  }
  void put(const std::string& s) {
    for (char c : s) buf.push_back(static_cast<std::byte>(c));
  }
  std::deque<std::byte> buf;
};

TEST(Wire, RequestRoundTrip) {
  MemoryStream s;
  Vector x(3);
  x << 1.5, -2.0, 1e-300;
  write_request(s, 42, x);
  EXPECT_EQ(s.buf.size(), 4u + 4u + 8u + 8u + 24u);
  EXPECT_EQ(static_cast<char>(s.buf[0]), 'C');
  EXPECT_EQ(static_cast<char>(s.buf[3]), 'D');
  EXPECT_EQ(static_cast<unsigned char>(s.buf[4]), 1u);  // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(s.buf[8]), 42u);  // step index
  const auto req = read_request(s);
  ASSERT_TRUE(req.has_value());
  EXPECT_EQ(req->step_index, 42u);
  EXPECT_EQ(req->x, x);
  EXPECT_FALSE(read_request(s).has_value());  // clean EOF
}

TEST(Wire, ResponseRoundTrip) {
  MemoryStream s;
  const Vector x = Vector::LinSpaced(5, -1.0, 1.0);
  write_response(s, x);
  EXPECT_EQ(static_cast<char>(s.buf[3]), 'R');
  EXPECT_EQ(read_response(s), x);
}

TEST(Wire, MalformedFramesAreProtocolErrors) {
  {
    MemoryStream s;
    s.put("XXXX");
    s.put(std::string(40, '\0'));
    EXPECT_EQ(code_of([&] { read_request(s); }), ErrorCode::Protocol);
  }
  {
    MemoryStream s;
    write_request(s, 1, Vector::Zero(2));
    s.buf[4] = std::byte{2};  // unsupported version
    EXPECT_EQ(code_of([&] { read_request(s); }), ErrorCode::Protocol);
  }
  {
    MemoryStream s;
    write_request(s, 1, Vector::Zero(2));
    s.buf.resize(s.buf.size() - 3);  // truncated payload
    EXPECT_EQ(code_of([&] { read_request(s); }), ErrorCode::Protocol);
  }
  {
    MemoryStream s;
    write_request(s, 1, Vector::Zero(2));  // request where a response is expected
    EXPECT_EQ(code_of([&] { read_response(s); }), ErrorCode::Protocol);
  }
}

TEST(Wire, ServeAnswersInOrder) {
  MemoryStream in;
  write_request(in, 1, Vector::Constant(2, 1.0));
  write_request(in, 2, Vector::Constant(2, 2.0));
  struct Loop : ByteStream {
    MemoryStream* in;
    MemoryStream out;
    void write_all(std::span<const std::byte> b) override { out.write_all(b); }
    bool read_exact(std::span<std::byte> b) override { return in->read_exact(b); }
  } loop;
  loop.in = &in;
  const auto served = serve(loop, [](std::uint64_t step, const Vector& x) {
    return Vector(x * static_cast<double>(step));
  });
  EXPECT_EQ(served, 2u);
  EXPECT_EQ(read_response(loop.out), Vector::Constant(2, 1.0));
  EXPECT_EQ(read_response(loop.out), Vector::Constant(2, 4.0));
}

// -------------------------------------------------------- external process

std::string write_server_config() {
  const std::string path = ::testing::TempDir() + "prior_test_server.json";
  std::ofstream out(path);
  out << R"({"prior": {"type": "gmm", "components": [
            {"weight": 0.4, "mean": [1.0, -1.0], "variance": 0.2},
            {"weight": 0.6, "mean": [-2.0, 0.5], "variance": [0.1, 0.3]}]},
           "schedule": {"num_steps": 20, "beta_min": 0.001, "beta_max": 0.05}})";
  return path;
}

TEST(ExternalDenoiser, MatchesAnalyticBackend) {
  const std::string cfg = write_server_config();
  const auto ext = DenoiserHandle::external(ExternalDenoiser::spawn({CPS_GMM_SERVER, cfg}, 2));
  Vector m1(2), m2(2), v2(2);
  m1 << 1.0, -1.0;
  m2 << -2.0, 0.5;
  v2 << 0.1, 0.3;
  const auto local = DenoiserHandle::analytic(
      GmmPrior::diagonal({0.4, 0.6}, {m1, m2}, {Vector::Constant(2, 0.2), v2}));
  const auto s = build_schedule(20, 0.001, 0.05);
  Gen g(8);
  for (int t : {0, 1, 7, 20}) {
    const Vector x = g.vector(2);
    EXPECT_EQ(denoise(ext, s, x, t), denoise(local, s, x, t)) << "t=" << t;
  }
  EXPECT_EQ(ext.kind(), DenoiserKind::External);
  EXPECT_EQ(ext.prior(), nullptr);
  EXPECT_EQ(code_of([&] { denoise(ext, s, Vector::Zero(3), 1); }), ErrorCode::DimensionMismatch);
}

TEST(ExternalDenoiser, DeadPeerIsProtocolError) {
  const auto ext = DenoiserHandle::external(ExternalDenoiser::spawn({"/bin/true"}, 2));
  const auto s = build_schedule(4, 0.1, 0.2);
  EXPECT_EQ(code_of([&] { denoise(ext, s, Vector::Zero(2), 1); }), ErrorCode::Protocol);
}

TEST(ExternalDenoiser, GarbageReplyIsProtocolError) {
  const auto ext = DenoiserHandle::external(
      ExternalDenoiser::spawn({"/bin/sh", "-c", "printf 'JUNKJUNKJUNKJUNKJUNKJUNK'; cat >/dev/null"}, 2));
  const auto s = build_schedule(4, 0.1, 0.2);
  EXPECT_EQ(code_of([&] { denoise(ext, s, Vector::Zero(2), 1); }), ErrorCode::Protocol);
}

TEST(ExternalDenoiser, WrongDimensionReplyIsProtocolError) {
  const std::string cfg = write_server_config();
  // Server prior is 2-D; the client claims 3-D and sends 3 values.
  const auto ext = DenoiserHandle::external(ExternalDenoiser::spawn({CPS_GMM_SERVER, cfg}, 3));
  const auto s = build_schedule(20, 0.001, 0.05);
  EXPECT_EQ(code_of([&] { denoise(ext, s, Vector::Zero(3), 1); }), ErrorCode::Protocol);
}

}  // namespace
