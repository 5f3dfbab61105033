#pragma once

#include <stdexcept>
#include <string>

namespace avseg {

// Error taxonomy: configuration (bad user input), shape (tensor contract
// violated), data (corrupt files on disk), numerical (NaN/Inf surfaced).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check_shape(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

inline void check_config(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

inline void check_data(bool ok, const std::string& msg) {
    if (!ok) throw DataError(msg);
}

}  // namespace avseg
