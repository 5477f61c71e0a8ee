#include "core/common/log.hpp"

#include <cstdio>
#include <mutex>

namespace sslseg::log {
namespace {

std::mutex g_mutex;
Sink g_sink;
Level g_min_level = Level::kInfo;

const char* tag(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
  }
  return "?";
}

}  // namespace

void set_sink(Sink sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void set_min_level(Level level) {
  std::lock_guard lock(g_mutex);
  g_min_level = level;
}

void write(Level level, std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (level < g_min_level) return;
  if (g_sink) {
    g_sink(level, message);
    return;
  }
  std::fprintf(stderr, "[%s] %.*s\n", tag(level), static_cast<int>(message.size()), message.data());
}

}  // namespace sslseg::log
