#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace flamewatch {

/// Seconds since the Unix epoch, UTC.
struct Timestamp {
    std::int64_t seconds = 0;

    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

/// Parses ISO-8601 date-times: "YYYY-MM-DDTHH:MM:SS" with optional fractional
/// seconds and a "Z", "+HH:MM" or "+HHMM" offset (no offset means UTC).
/// Throws InputError on anything else.
Timestamp parse_iso8601(std::string_view text);

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_iso8601(Timestamp t);

}  // namespace flamewatch
