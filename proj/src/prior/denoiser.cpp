#include "cps/prior/denoiser.hpp"

#include <csignal>
#include <cstring>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

namespace cps::prior {

namespace {

// Stdio pipes to a child process; reaps the child on destruction.
class ChildStream : public ByteStream {
 public:
  ChildStream(int read_fd, int write_fd, pid_t pid) : fds_(read_fd, write_fd), pid_(pid) {}
  ~ChildStream() override {
    fds_.close_write();
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
  void write_all(std::span<const std::byte> bytes) override { fds_.write_all(bytes); }
  bool read_exact(std::span<std::byte> out) override { return fds_.read_exact(out); }

 private:
  FdStream fds_;
  pid_t pid_;
};

}  // namespace

ExternalDenoiser::ExternalDenoiser(std::unique_ptr<ByteStream> channel, int dim)
    : channel_(std::move(channel)), dim_(dim) {
  require(channel_ != nullptr, ErrorCode::InvalidArgument, "external denoiser needs a channel");
  require(dim_ > 0, ErrorCode::DimensionMismatch, "external denoiser dim must be positive");
}

std::shared_ptr<ExternalDenoiser> ExternalDenoiser::spawn(const std::vector<std::string>& argv,
                                                          int dim) {
  require(!argv.empty(), ErrorCode::InvalidArgument, "empty denoiser command");
  // A dead child must surface as a protocol error, not kill us.
  std::signal(SIGPIPE, SIG_IGN);

  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0) fail(ErrorCode::Protocol, "pipe() failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    fail(ErrorCode::Protocol, "pipe() failed");
  }

  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) fail(ErrorCode::Protocol, "fork() failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execvp(cargv[0], cargv.data());
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_shared<ExternalDenoiser>(
      std::make_unique<ChildStream>(from_child[0], to_child[1], pid), dim);
}

Vector ExternalDenoiser::request(int step_index, const Vector& x_t) {
  require_same_size(x_t.size(), dim_, "external denoise input");
  std::lock_guard<std::mutex> lock(mu_);
  write_request(*channel_, static_cast<std::uint64_t>(step_index), x_t);
  Vector out = read_response(*channel_);
  require(out.size() == dim_, ErrorCode::Protocol,
          "response dim " + std::to_string(out.size()) + " != " + std::to_string(dim_));
  return out;
}

DenoiserHandle DenoiserHandle::analytic(GmmPrior prior) {
  return DenoiserHandle(std::make_shared<const GmmPrior>(std::move(prior)));
}

DenoiserHandle DenoiserHandle::external(std::shared_ptr<ExternalDenoiser> channel) {
  require(channel != nullptr, ErrorCode::InvalidArgument, "null external denoiser");
  return DenoiserHandle(std::move(channel));
}

DenoiserKind DenoiserHandle::kind() const {
  return std::holds_alternative<std::shared_ptr<const GmmPrior>>(backing_)
             ? DenoiserKind::AnalyticGmm
             : DenoiserKind::External;
}

int DenoiserHandle::dim() const {
  return std::visit([](const auto& p) { return p->dim(); }, backing_);
}

const GmmPrior* DenoiserHandle::prior() const {
  if (const auto* p = std::get_if<std::shared_ptr<const GmmPrior>>(&backing_)) return p->get();
  return nullptr;
}

Vector denoise(const DenoiserHandle& handle, const DiffusionSchedule& schedule, const Vector& x_t,
               int step_index) {
  require(step_index >= 0 && step_index <= schedule.num_steps(), ErrorCode::IndexOutOfRange,
          "denoise step " + std::to_string(step_index));
  require_same_size(x_t.size(), handle.dim(), "denoise input vs prior dimension");
  if (const auto* gmm = std::get_if<std::shared_ptr<const GmmPrior>>(&handle.backing_)) {
    return (*gmm)->posterior_mean(x_t, schedule.alpha_bar(step_index));
  }
  return std::get<std::shared_ptr<ExternalDenoiser>>(handle.backing_)->request(step_index, x_t);
}

}  // namespace cps::prior
