#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cps {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Seed = std::uint64_t;

enum class ErrorCode {
  InvalidRange,
  IndexOutOfRange,
  DimensionMismatch,
  DegenerateKernel,
  ZeroGradient,
  NoRoot,
  SolverDivergence,
  InvalidCost,
  InvalidSelection,
  InvalidArgument,
  Protocol,
  CflViolation,
  NonlinearOperator,
  Config,
  Io,
  ModelFailure,  // non-library exception escaping a user-supplied forward model
};

const char* to_string(ErrorCode code);

/// Every failure in the library is reported as a cps::Error carrying a
/// machine-checkable code; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool cond, ErrorCode code, const char* what) {
  if (!cond) fail(code, what);
}
inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

void require_same_size(Eigen::Index a, Eigen::Index b, const char* what);

/// splitmix64 finalizer; used to derive independent per-call seeds from a run
/// seed and a position tuple.
std::uint64_t mix_seed(std::uint64_t x);

inline Seed derive_seed(Seed base, std::uint64_t a, std::uint64_t b = 0,
                        std::uint64_t c = 0) {
  std::uint64_t h = mix_seed(base ^ 0x9e3779b97f4a7c15ULL);
  h = mix_seed(h ^ a);
  h = mix_seed(h ^ (b + 0x632be59bd9b4e019ULL));
  h = mix_seed(h ^ (c + 0x85157af5ULL));
  return h;
}

using Rng = std::mt19937_64;

/// Fills a vector with i.i.d. standard normal draws from `rng`.
Vector standard_normal(Eigen::Index n, Rng& rng);

}  // namespace cps
