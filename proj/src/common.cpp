#include "cps/common.hpp"

#include <string>

namespace cps {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidRange: return "invalid-range";
    case ErrorCode::IndexOutOfRange: return "index-out-of-range";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::DegenerateKernel: return "degenerate-kernel";
    case ErrorCode::ZeroGradient: return "zero-gradient";
    case ErrorCode::NoRoot: return "no-root";
    case ErrorCode::SolverDivergence: return "linear-solver-divergence";
    case ErrorCode::InvalidCost: return "invalid-cost";
    case ErrorCode::InvalidSelection: return "invalid-selection";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Protocol: return "protocol";
    case ErrorCode::CflViolation: return "cfl-violation";
    case ErrorCode::NonlinearOperator: return "nonlinear-operator";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
    case ErrorCode::ModelFailure: return "model-failure";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& what) {
  throw Error(code, std::string(to_string(code)) + ": " + what);
}

void require_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    fail(ErrorCode::DimensionMismatch,
         std::string(what) + " (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vector standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal(rng);
  return out;
}

}  // namespace cps
