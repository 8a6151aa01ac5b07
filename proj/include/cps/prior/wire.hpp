#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "cps/common.hpp"

namespace cps::prior {

// External denoiser frames. All integers and floats little-endian.
//
//   request:  "CPSD" | u32 version=1 | u64 step_index | u64 dim | dim x f64
//   response: "CPSR" | u32 version=1 | u64 dim | dim x f64
//
// One response per request, in order.
inline constexpr std::uint32_t kWireVersion = 1;

/// Blocking byte channel. Implementations throw Error(Protocol) when the
/// peer disappears mid-frame.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write_all(std::span<const std::byte> bytes) = 0;
  /// Fills `out` completely. Returns false only on a clean EOF before the
  /// first byte; EOF mid-buffer is a protocol error.
  virtual bool read_exact(std::span<std::byte> out) = 0;
};

/// Owns a pair of file descriptors (may be the same descriptor twice, e.g. a
/// socket).
class FdStream : public ByteStream {
 public:
  FdStream(int read_fd, int write_fd);
  ~FdStream() override;
  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  void write_all(std::span<const std::byte> bytes) override;
  bool read_exact(std::span<std::byte> out) override;
  void close_write();

 private:
  int read_fd_;
  int write_fd_;
};

struct DenoiseRequest {
  std::uint64_t step_index = 0;
  Vector x;
};

void write_request(ByteStream& s, std::uint64_t step_index, const Vector& x);
/// std::nullopt on clean EOF at a frame boundary.
std::optional<DenoiseRequest> read_request(ByteStream& s);
void write_response(ByteStream& s, const Vector& x0_hat);
Vector read_response(ByteStream& s);

/// Server loop: answers requests until the client closes the stream.
/// Returns the number of requests served.
std::size_t serve(ByteStream& s,
                  const std::function<Vector(std::uint64_t step_index, const Vector& x_t)>& fn);

}  // namespace cps::prior
