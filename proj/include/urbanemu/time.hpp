#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace urbanemu {

/// UTC instant with one-second resolution.
using Instant = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

/// Parses `YYYY-MM-DDTHH:MM:SS` with an optional trailing `Z`. Throws LoadError.
Instant parse_iso8601(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(Instant t);

/// Seconds since the Unix epoch.
inline double epoch_seconds(Instant t) {
    return static_cast<double>(t.time_since_epoch().count());
}

}  // namespace urbanemu
