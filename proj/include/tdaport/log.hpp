#pragma once

#include <string>
#include <string_view>

namespace tdaport::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Silent = 3 };

void set_level(Level level) noexcept;
Level level() noexcept;

void info(std::string_view message);
void warn(std::string_view message);

/// Prefixes messages logged by the current thread while alive.
class Context {
public:
    explicit Context(std::string label);
    ~Context();
    Context(const Context&) = delete;
    Context& operator=(const Context&) = delete;

private:
    std::string previous_;
};

}  // namespace tdaport::log
