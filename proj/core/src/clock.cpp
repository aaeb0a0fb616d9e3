#include "iclopt/clock.hpp"

#include <chrono>
#include <ctime>
#include <memory>
#include <mutex>

#include <fmt/format.h>

namespace iclopt {

namespace {

std::string iso8601(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec);
}

}  // namespace

Clock wall_clock() {
  return [] { return iso8601(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())); };
}

Clock logical_clock() {
  struct State {
    std::mutex mutex;
    std::time_t next = 0;
  };
  auto state = std::make_shared<State>();
  return [state] {
    std::lock_guard lock(state->mutex);
    return iso8601(state->next++);
  };
}

}  // namespace iclopt
