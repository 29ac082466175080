#pragma once

#include <charconv>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "epu/error.hpp"

namespace epu {

/// Calendar month, the bucket used by all index computations.
struct Month {
    int year = 1970;
    int month = 1;  // 1..12

    constexpr auto operator<=>(const Month&) const = default;

    /// Months since 0000-01; handy for arithmetic and hashing.
    [[nodiscard]] constexpr int ordinal() const { return year * 12 + (month - 1); }
    [[nodiscard]] static constexpr Month from_ordinal(int ord) {
        const int y = ord >= 0 ? ord / 12 : (ord - 11) / 12;
        return Month{y, ord - y * 12 + 1};
    }
    [[nodiscard]] constexpr Month next() const { return from_ordinal(ordinal() + 1); }

    [[nodiscard]] std::string str() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
        return buf;
    }
};

/// Day-precision calendar date without timezone.
struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    constexpr auto operator<=>(const Date&) const = default;

    [[nodiscard]] constexpr Month to_month() const { return Month{year, month}; }

    [[nodiscard]] std::string str() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
        return buf;
    }
};

[[nodiscard]] constexpr bool is_leap_year(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

[[nodiscard]] constexpr int days_in_month(int y, int m) {
    constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap_year(y) ? 29 : days[m - 1];
}

namespace detail {

inline bool parse_fixed_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

} // namespace detail

/// Parses strict `YYYY-MM-DD`; returns nullopt on any deviation or impossible date.
[[nodiscard]] inline std::optional<Date> parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    Date d;
    if (!detail::parse_fixed_int(s.substr(0, 4), d.year) ||
        !detail::parse_fixed_int(s.substr(5, 2), d.month) ||
        !detail::parse_fixed_int(s.substr(8, 2), d.day))
        return std::nullopt;
    if (d.month < 1 || d.month > 12) return std::nullopt;
    if (d.day < 1 || d.day > days_in_month(d.year, d.month)) return std::nullopt;
    return d;
}

/// Parses `YYYY-MM`.
[[nodiscard]] inline std::optional<Month> parse_month(std::string_view s) {
    if (s.size() != 7 || s[4] != '-') return std::nullopt;
    Month m;
    if (!detail::parse_fixed_int(s.substr(0, 4), m.year) ||
        !detail::parse_fixed_int(s.substr(5, 2), m.month))
        return std::nullopt;
    if (m.month < 1 || m.month > 12) return std::nullopt;
    return m;
}

[[nodiscard]] inline Date parse_date_or_throw(std::string_view s) {
    auto d = parse_date(s);
    if (!d) throw ValidationError("invalid date '" + std::string(s) + "', expected YYYY-MM-DD");
    return *d;
}

[[nodiscard]] inline Month parse_month_or_throw(std::string_view s) {
    auto m = parse_month(s);
    if (!m) throw ValidationError("invalid month '" + std::string(s) + "', expected YYYY-MM");
    return *m;
}

/// Inclusive month range, used for normalization windows.
struct MonthRange {
    Month first;
    Month last;

    [[nodiscard]] constexpr bool contains(Month m) const { return first <= m && m <= last; }
    [[nodiscard]] constexpr bool empty() const { return last < first; }
};

} // namespace epu
