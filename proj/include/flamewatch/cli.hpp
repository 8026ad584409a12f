#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace flamewatch {

/// Exit codes: 0 success, 1 internal or numeric failure, 2 bad input.
/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flamewatch
