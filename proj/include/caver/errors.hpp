#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace caver {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Extent/rank disagreement between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Non-finite value crossed an operation boundary.
struct NumericError : Error {
    using Error::Error;
};

// Feature-map extents not divisible by the requested patch side.
struct PatchError : Error {
    using Error::Error;
};

// Malformed or unreadable tensor file.
struct IoError : Error {
    using Error::Error;
};

// Missing or inconsistent weight tensor.
struct WeightError : Error {
    using Error::Error;
};

// Invalid run configuration.
struct ConfigError : Error {
    using Error::Error;
};

namespace detail {

template <typename... Args>
std::string msg(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

}  // namespace detail

}  // namespace caver
