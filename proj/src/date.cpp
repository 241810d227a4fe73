#include "tdaport/date.hpp"

#include <charconv>
#include <cstdio>

#include "tdaport/error.hpp"

namespace tdaport {

using namespace std::chrono;

Date::Date(int y, unsigned m, unsigned d) {
    const year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok()) throw Error(ErrorCode::InvalidArgument, "invalid calendar date");
    days_ = std::chrono::sys_days{ymd};
}

Date Date::parse(std::string_view text) {
    auto fail = [&]() -> Error {
        return Error(ErrorCode::Parse, "malformed date '" + std::string(text) + "' (expected YYYY-MM-DD)");
    };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw fail();
    auto field = [&](std::size_t pos, std::size_t len) {
        int value = 0;
        const char* first = text.data() + pos;
        auto [ptr, ec] = std::from_chars(first, first + len, value);
        if (ec != std::errc{} || ptr != first + len) throw fail();
        return value;
    };
    const year_month_day ymd{year{field(0, 4)}, month{static_cast<unsigned>(field(5, 2))},
                             day{static_cast<unsigned>(field(8, 2))}};
    if (!ymd.ok()) throw fail();
    return Date(std::chrono::sys_days{ymd});
}

std::string Date::iso() const {
    const year_month_day ymd{days_};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

bool Date::is_weekday() const {
    const weekday wd{days_};
    return wd != Saturday && wd != Sunday;
}

}  // namespace tdaport
