#pragma once

#include <string>
#include <string_view>

namespace flamewatch {

/// Porter stemmer, following Martin Porter's reference C implementation
/// (including its "bli"->"ble" and "logi"->"log" departures from the 1980
/// description). Input must be lowercase. Tokens that are not purely ASCII
/// a-z (emoji, numbers, mixed tokens) are returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace flamewatch
