#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace tdaport {

/// Calendar date with day resolution, stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}
    Date(int year, unsigned month, unsigned day);

    /// Parses ISO-8601 `YYYY-MM-DD`. Throws Error(Parse) on malformed input.
    static Date parse(std::string_view text);

    [[nodiscard]] std::string iso() const;
    [[nodiscard]] constexpr std::chrono::sys_days sys_days() const { return days_; }
    [[nodiscard]] bool is_weekday() const;

    constexpr auto operator<=>(const Date&) const = default;

private:
    std::chrono::sys_days days_{};
};

}  // namespace tdaport
