#include "cps/prior/wire.hpp"

#include <array>
#include <bit>
#include <cerrno>
#include <cstring>
#include <string>
#include <vector>

#include <unistd.h>

namespace cps::prior {

namespace {

constexpr std::array<char, 4> kRequestMagic{'C', 'P', 'S', 'D'};
constexpr std::array<char, 4> kResponseMagic{'C', 'P', 'S', 'R'};
// Upper bound on a frame's payload so a corrupt length cannot trigger a huge
// allocation.
constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 28;

template <typename T>
void put_le(std::vector<std::byte>& buf, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(std::span<const std::byte> bytes) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(std::to_integer<std::uint8_t>(bytes[i])) << (8 * i);
  }
  return value;
}

void put_values(std::vector<std::byte>& buf, const Vector& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) put_le(buf, std::bit_cast<std::uint64_t>(x[i]));
}

Vector read_values(ByteStream& s, std::uint64_t dim) {
  std::vector<std::byte> raw(dim * 8);
  if (dim > 0 && !s.read_exact(raw)) fail(ErrorCode::Protocol, "stream closed inside payload");
  Vector x(static_cast<Eigen::Index>(dim));
  for (std::uint64_t i = 0; i < dim; ++i) {
    x[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(
        get_le<std::uint64_t>(std::span<const std::byte>(raw).subspan(i * 8, 8)));
  }
  return x;
}

void check_magic(std::span<const std::byte> got, const std::array<char, 4>& want) {
  if (std::memcmp(got.data(), want.data(), 4) != 0) {
    fail(ErrorCode::Protocol, std::string("bad frame magic, expected ") +
                                  std::string(want.data(), 4));
  }
}

}  // namespace

FdStream::FdStream(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

FdStream::~FdStream() {
  if (read_fd_ >= 0) ::close(read_fd_);
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
}

void FdStream::close_write() {
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  write_fd_ = -1;
}

void FdStream::write_all(std::span<const std::byte> bytes) {
  require(write_fd_ >= 0, ErrorCode::Protocol, "write on closed stream");
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(write_fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::Protocol, std::string("write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

bool FdStream::read_exact(std::span<std::byte> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t n = ::read(read_fd_, out.data() + done, out.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::Protocol, std::string("read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      if (done == 0) return false;
      fail(ErrorCode::Protocol, "stream closed mid-frame");
    }
    done += static_cast<std::size_t>(n);
  }
  return true;
}

void write_request(ByteStream& s, std::uint64_t step_index, const Vector& x) {
  std::vector<std::byte> buf;
  buf.reserve(24 + 8 * static_cast<std::size_t>(x.size()));
  for (char c : kRequestMagic) buf.push_back(static_cast<std::byte>(c));
  put_le<std::uint32_t>(buf, kWireVersion);
  put_le<std::uint64_t>(buf, step_index);
  put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(x.size()));
  put_values(buf, x);
  s.write_all(buf);
}

std::optional<DenoiseRequest> read_request(ByteStream& s) {
  std::array<std::byte, 24> head{};
  if (!s.read_exact(head)) return std::nullopt;
  const std::span<const std::byte> h(head);
  check_magic(h.first(4), kRequestMagic);
  const auto version = get_le<std::uint32_t>(h.subspan(4, 4));
  require(version == kWireVersion, ErrorCode::Protocol,
          "unsupported request version " + std::to_string(version));
  DenoiseRequest req;
  req.step_index = get_le<std::uint64_t>(h.subspan(8, 8));
  const auto dim = get_le<std::uint64_t>(h.subspan(16, 8));
  require(dim <= kMaxDim, ErrorCode::Protocol, "request dim too large");
  req.x = read_values(s, dim);
  return req;
}

void write_response(ByteStream& s, const Vector& x0_hat) {
  std::vector<std::byte> buf;
  buf.reserve(16 + 8 * static_cast<std::size_t>(x0_hat.size()));
  for (char c : kResponseMagic) buf.push_back(static_cast<std::byte>(c));
  put_le<std::uint32_t>(buf, kWireVersion);
  put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(x0_hat.size()));
  put_values(buf, x0_hat);
  s.write_all(buf);
}

Vector read_response(ByteStream& s) {
  std::array<std::byte, 16> head{};
  if (!s.read_exact(head)) fail(ErrorCode::Protocol, "stream closed before response");
  const std::span<const std::byte> h(head);
  check_magic(h.first(4), kResponseMagic);
  const auto version = get_le<std::uint32_t>(h.subspan(4, 4));
  require(version == kWireVersion, ErrorCode::Protocol,
          "unsupported response version " + std::to_string(version));
  const auto dim = get_le<std::uint64_t>(h.subspan(8, 8));
  require(dim <= kMaxDim, ErrorCode::Protocol, "response dim too large");
  return read_values(s, dim);
}

std::size_t serve(ByteStream& s,
                  const std::function<Vector(std::uint64_t, const Vector&)>& fn) {
  std::size_t served = 0;
  while (auto req = read_request(s)) {
    write_response(s, fn(req->step_index, req->x));
    ++served;
  }
  return served;
}

}  // namespace cps::prior
