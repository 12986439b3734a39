#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace zerosight {

// Exit codes used by the CLI: 0 ok, 2 config error, 3 numerical abort.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration: invalid module wiring, unknown config keys, file format
// violations, impossible output extents.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Shape mismatch between op operands. Message names the offending dimension.
class ShapeError : public ConfigError {
public:
    explicit ShapeError(const std::string& msg) : ConfigError(msg) {}
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
}

// Row-major strides.
inline std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> st(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
    return st;
}

}  // namespace zerosight
