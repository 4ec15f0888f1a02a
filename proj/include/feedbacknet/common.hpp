#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbnet {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Operand shapes do not admit the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A class/target index is outside its valid range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// An API precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Invalid key, value, or combination in a configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed on-disk data (checkpoint, dataset, taxonomy file).
class FormatError : public Error {
public:
    using Error::Error;
};

/// A checkpoint is structurally valid but unusable (fingerprint mismatch).
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
public:
    using Error::Error;
};

/// File system failure.
class IoError : public Error {
public:
    using Error::Error;
};

enum class Mode { Train, Eval };

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

} // namespace detail

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError(detail::concat("non-positive dimension in shape ", shape_str(shape)));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

} // namespace fbnet
