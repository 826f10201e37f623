#include "urbanemu/time.hpp"

#include <cstdio>

#include "urbanemu/errors.hpp"

namespace urbanemu {

Instant parse_iso8601(std::string_view text) {
    int y = 0;
    unsigned mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char tail = '\0';
    const std::string buf(text);
    const int n = std::sscanf(buf.c_str(), "%4d-%2u-%2uT%2u:%2u:%2u%c", &y, &mo, &d, &h, &mi, &s, &tail);
    if (n < 6 || (n == 7 && tail != 'Z') || h > 23 || mi > 59 || s > 60) {
        throw LoadError("invalid ISO-8601 timestamp '" + buf + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{d}};
    if (!ymd.ok()) {
        throw LoadError("invalid calendar date in timestamp '" + buf + "'");
    }
    return std::chrono::sys_days{ymd} + std::chrono::hours{h} + std::chrono::minutes{mi} + Seconds{s};
}

std::string format_iso8601(Instant t) {
    const auto day = std::chrono::floor<std::chrono::days>(t);
    const std::chrono::year_month_day ymd{day};
    const std::chrono::hh_mm_ss hms{t - day};
    char out[32];
    std::snprintf(out, sizeof out, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return out;
}

}  // namespace urbanemu
