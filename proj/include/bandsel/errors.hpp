#pragma once

#include <stdexcept>
#include <string>

namespace bandsel {

// Error taxonomy mirrors the CLI exit codes: config -> 2, data/format -> 3,
// numerical -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataFormatError : std::runtime_error {
    explicit DataFormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bandsel
