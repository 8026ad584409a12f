#include "flamewatch/timestamp.hpp"

#include <chrono>
#include <cstdio>

#include "flamewatch/error.hpp"

namespace flamewatch {

namespace {

bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const char c = s[pos + i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

[[noreturn]] void bad(std::string_view text) {
    throw InputError("invalid ISO-8601 timestamp: '" + std::string(text) + "'");
}

}  // namespace

Timestamp parse_iso8601(std::string_view text) {
    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
    if (!read_digits(text, 0, 4, year) || text.size() < 10 || text[4] != '-' ||
        !read_digits(text, 5, 2, month) || text[7] != '-' || !read_digits(text, 8, 2, day))
        bad(text);
    std::size_t pos = 10;
    if (pos < text.size()) {
        if (text[pos] != 'T' && text[pos] != 't' && text[pos] != ' ') bad(text);
        if (!read_digits(text, pos + 1, 2, hour) || pos + 3 >= text.size() || text[pos + 3] != ':' ||
            !read_digits(text, pos + 4, 2, minute))
            bad(text);
        pos += 6;
        if (pos < text.size() && text[pos] == ':') {
            if (!read_digits(text, pos + 1, 2, second)) bad(text);
            pos += 3;
            if (pos < text.size() && (text[pos] == '.' || text[pos] == ',')) {
                ++pos;
                const std::size_t start = pos;
                while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
                if (pos == start) bad(text);
            }
        }
    }
    int offset_seconds = 0;
    if (pos < text.size()) {
        const char c = text[pos];
        if ((c == 'Z' || c == 'z') && pos + 1 == text.size()) {
            pos += 1;
        } else if (c == '+' || c == '-') {
            int oh = 0, om = 0;
            if (!read_digits(text, pos + 1, 2, oh)) bad(text);
            std::size_t p = pos + 3;
            if (p < text.size() && text[p] == ':') ++p;
            if (!read_digits(text, p, 2, om) || p + 2 != text.size()) bad(text);
            if (oh > 23 || om > 59) bad(text);
            offset_seconds = (oh * 3600 + om * 60) * (c == '-' ? -1 : 1);
            pos = text.size();
        } else {
            bad(text);
        }
    }
    if (month < 1 || month > 12 || hour > 23 || minute > 59 || second > 60) bad(text);

    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok()) bad(text);
    const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
    const std::int64_t local = static_cast<std::int64_t>(days_since_epoch) * 86400 + hour * 3600 +
                               minute * 60 + second;
    return Timestamp{local - offset_seconds};
}

std::string format_iso8601(Timestamp t) {
    using namespace std::chrono;
    std::int64_t days = t.seconds / 86400;
    std::int64_t rem = t.seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
    return buf;
}

}  // namespace flamewatch
