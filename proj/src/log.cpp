#include "tdaport/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

namespace tdaport::log {

namespace {
std::atomic<Level> g_level{Level::Warn};
std::mutex g_sink_mutex;
thread_local std::string t_context;

void emit(Level lvl, const char* tag, std::string_view message) {
    if (lvl < g_level.load(std::memory_order_relaxed)) return;
    std::lock_guard lock(g_sink_mutex);
    std::clog << tag;
    if (!t_context.empty()) std::clog << t_context << ": ";
    std::clog << message << '\n';
}
}  // namespace

Context::Context(std::string label) : previous_(std::move(t_context)) { t_context = std::move(label); }
Context::~Context() { t_context = std::move(previous_); }

void set_level(Level lvl) noexcept { g_level.store(lvl, std::memory_order_relaxed); }
Level level() noexcept { return g_level.load(std::memory_order_relaxed); }

void info(std::string_view message) { emit(Level::Info, "info: ", message); }
void warn(std::string_view message) { emit(Level::Warn, "warning: ", message); }

}  // namespace tdaport::log
