#include "sag/dates.hpp"

#include <charconv>
#include <chrono>

#include "sag/errors.hpp"

namespace sag {

namespace {

int parse_field(std::string_view text, std::size_t pos, std::size_t len) {
    int value = 0;
    auto* first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc{} || ptr != first + len) {
        throw SchemaError("bad date field in '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace

Date Date::from_iso(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw SchemaError("date '" + std::string(text) +
                          "' is not in YYYY-MM-DD form");
    }
    int y = parse_field(text, 0, 4);
    int m = parse_field(text, 5, 2);
    int d = parse_field(text, 8, 2);

    std::chrono::year_month_day ymd{std::chrono::year{y},
                                    std::chrono::month{unsigned(m)},
                                    std::chrono::day{unsigned(d)}};
    if (!ymd.ok()) {
        throw SchemaError("date '" + std::string(text) +
                          "' is not a valid calendar date");
    }
    auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
    return Date{static_cast<int>(days)};
}

std::string Date::iso() const {
    std::chrono::year_month_day ymd{
        std::chrono::sys_days{std::chrono::days{serial}}};
    char buf[11];
    int y = int(ymd.year());
    unsigned m = unsigned(ymd.month());
    unsigned d = unsigned(ymd.day());
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
    return std::string(buf);
}

int Date::day_of_year() const {
    std::chrono::sys_days today{std::chrono::days{serial}};
    std::chrono::year_month_day ymd{today};
    std::chrono::sys_days jan1{ymd.year() / std::chrono::January / 1};
    return static_cast<int>((today - jan1).count());
}

}  // namespace sag
