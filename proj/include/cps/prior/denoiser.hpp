#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "cps/prior/gmm.hpp"
#include "cps/prior/schedule.hpp"
#include "cps/prior/wire.hpp"

namespace cps::prior {

/// Client side of the external denoiser protocol. Requests are serialized
/// over the single channel; concurrent callers queue on an internal mutex.
class ExternalDenoiser {
 public:
  ExternalDenoiser(std::unique_ptr<ByteStream> channel, int dim);
  virtual ~ExternalDenoiser() = default;

  /// Spawns `argv` with its stdin/stdout connected to the protocol.
  static std::shared_ptr<ExternalDenoiser> spawn(const std::vector<std::string>& argv, int dim);

  int dim() const { return dim_; }
  Vector request(int step_index, const Vector& x_t);

 private:
  std::unique_ptr<ByteStream> channel_;
  int dim_;
  std::mutex mu_;
};

enum class DenoiserKind { AnalyticGmm, External };

/// Tweedie one-step denoiser, backed either by an analytic GMM prior or by an
/// external process.
class DenoiserHandle {
 public:
  static DenoiserHandle analytic(GmmPrior prior);
  static DenoiserHandle external(std::shared_ptr<ExternalDenoiser> channel);

  DenoiserKind kind() const;
  int dim() const;
  /// Null for external handles.
  const GmmPrior* prior() const;

 private:
  friend Vector denoise(const DenoiserHandle&, const DiffusionSchedule&, const Vector&, int);
  explicit DenoiserHandle(std::variant<std::shared_ptr<const GmmPrior>,
                                       std::shared_ptr<ExternalDenoiser>> backing)
      : backing_(std::move(backing)) {}

  std::variant<std::shared_ptr<const GmmPrior>, std::shared_ptr<ExternalDenoiser>> backing_;
};

/// x0_hat = E[x0 | x_t] at step `step_index` in [0, T].
Vector denoise(const DenoiserHandle& handle, const DiffusionSchedule& schedule, const Vector& x_t,
               int step_index);

}  // namespace cps::prior
