#pragma once

#include <json.hpp>

#include "flamewatch/corpus.hpp"

namespace flamewatch {

using json = nlohmann::json;

json clean_to_json(const CleanComment& c);
/// Throws InputError on missing or mistyped keys.
CleanComment clean_from_json(const json& j);

}  // namespace flamewatch
