#pragma once
#include <stdexcept>
#include <string>

namespace mcei {

// Exit-code mapping: ConfigError -> 1, DataError -> 2, NumericError -> 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string &what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string &what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string &what) : std::runtime_error(what) {}
};

} // namespace mcei
