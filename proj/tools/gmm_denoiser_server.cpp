// Serves the analytic GMM denoiser over the external-denoiser protocol on
// stdin/stdout. Handy for exercising the external prior path end to end.
//
//   cps-gmm-server <config.json>     (reads /prior and /schedule)

#include <cstdio>
#include <exception>
#include <unistd.h>

#include "cps/harness/config.hpp"
#include "cps/harness/experiment.hpp"
#include "cps/prior/wire.hpp"

int main(int argc, char** argv) {
  using namespace cps;
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <config.json>\n", argv[0]);
    return 2;
  }
  try {
    const harness::ServerConfig cfg = harness::load_server_config(argv[1]);
    const prior::DiffusionSchedule schedule = cfg.schedule.build();
    prior::FdStream stream(STDIN_FILENO, STDOUT_FILENO);
    prior::serve(stream, [&](std::uint64_t step, const Vector& x) {
      require(step <= static_cast<std::uint64_t>(schedule.num_steps()), ErrorCode::Protocol,
              "step index beyond the schedule");
      require(x.size() == cfg.prior.dim(), ErrorCode::Protocol, "request dimension mismatch");
      return cfg.prior.posterior_mean(x, schedule.alpha_bar(static_cast<int>(step)));
    });
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "cps-gmm-server: %s\n", e.what());
    return harness::exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cps-gmm-server: %s\n", e.what());
    return 3;
  }
}
