#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace flamewatch {

/// Writes to a sibling temp file and renames it over `path`, so readers never
/// observe a partially written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Whole-file read; throws InputError naming the path when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

}  // namespace flamewatch
