#ifndef SAG_DATES_HPP
#define SAG_DATES_HPP

#include <compare>
#include <string>
#include <string_view>

namespace sag {

/**
 * A calendar date stored as a day count since 1970-01-01.
 *
 * The integer form makes calendar-contiguity checks and day arithmetic exact;
 * conversion to and from ISO-8601 text happens only at the file boundary.
 */
struct Date {
    int serial = 0;

    auto operator<=>(const Date&) const = default;

    Date plus_days(int n) const { return Date{serial + n}; }
    int days_until(Date other) const { return other.serial - serial; }

    /// Parse "YYYY-MM-DD"; throws SchemaError on malformed or invalid dates.
    static Date from_iso(std::string_view text);

    /// Render as "YYYY-MM-DD".
    std::string iso() const;

    /// Day-of-year in [0, 365], used by seasonal signal generators.
    int day_of_year() const;
};

}  // namespace sag

#endif  // SAG_DATES_HPP
