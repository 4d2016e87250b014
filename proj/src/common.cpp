#include "genadapt/common.hpp"

#include <cstdio>
#include <mutex>
#include <utility>

namespace genadapt {

namespace {
std::mutex g_warn_mutex;
WarnHandler g_warn_handler;  // empty -> stderr
}  // namespace

void set_warn_handler(WarnHandler handler) {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  g_warn_handler = std::move(handler);
}

void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  if (g_warn_handler) {
    g_warn_handler(msg);
  } else {
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
  }
}

}  // namespace genadapt
