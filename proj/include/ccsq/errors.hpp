#pragma once

#include <stdexcept>
#include <string>

namespace ccsq {

// Bad user input: malformed files, out-of-range labels, mismatched shapes.
// Maps to CLI exit code 2.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Configuration that cannot be satisfied (k < 2, fewer speakers than folds, ...).
// Maps to CLI exit code 2.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Degenerate statistics (constant series where variance is required) and
// training divergence. Maps to CLI exit code 3.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ccsq
