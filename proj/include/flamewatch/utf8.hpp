#pragma once

#include <string>
#include <string_view>

namespace flamewatch::utf8 {

/// Decodes UTF-8. Invalid sequences decode to U+FFFD, one per offending byte.
std::u32string decode(std::string_view bytes);
std::string encode(std::u32string_view cps);
std::string encode(char32_t cp);

/// Pictographic emoji codepoints. Skin-tone modifiers, ZWJ and variation
/// selectors are not emoji on their own.
bool is_emoji(char32_t cp);

/// Letters: ASCII, Latin-1 / Latin Extended-A/B, Greek and Cyrillic blocks.
bool is_letter(char32_t cp);
bool is_digit(char32_t cp);
bool is_space(char32_t cp);

/// Case mapping covers ASCII and Latin-1 only.
bool is_upper(char32_t cp);
char32_t to_lower(char32_t cp);

}  // namespace flamewatch::utf8
