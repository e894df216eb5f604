#include "ragutil/log.hpp"

#include <atomic>

#include <spdlog/spdlog.h>

namespace ragutil::log {

namespace {
std::atomic<std::size_t> g_warnings{0};
std::atomic<bool> g_quiet{false};
}  // namespace

void warn_message(std::string_view message) {
  ++g_warnings;
  if (!g_quiet) spdlog::warn("{}", message);
}

void info_message(std::string_view message) {
  if (!g_quiet) spdlog::info("{}", message);
}

std::size_t warning_count() { return g_warnings.load(); }

void set_quiet(bool quiet) { g_quiet = quiet; }

}  // namespace ragutil::log
