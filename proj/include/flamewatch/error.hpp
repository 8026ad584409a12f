#pragma once

#include <stdexcept>
#include <string>

namespace flamewatch {

/// Bad user input: missing files, malformed records, invalid configuration.
/// The CLI maps this to exit code 2; every other exception maps to 1.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numeric failure inside training or inference (NaN/Inf).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace flamewatch
