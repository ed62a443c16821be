#include "afl/log.hpp"

#include <atomic>
#include <iostream>

namespace afl::log {

namespace {
std::atomic<bool> g_quiet{false};
}

void set_quiet(bool q) { g_quiet = q; }
bool quiet() { return g_quiet; }

void info(std::string_view msg) {
  if (!g_quiet) std::cerr << "[info] " << msg << "\n";
}

void warn(std::string_view msg) { std::cerr << "[warn] " << msg << "\n"; }

}  // namespace afl::log
