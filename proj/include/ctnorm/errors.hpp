#pragma once

#include <stdexcept>
#include <string>

namespace ctnorm {

// Error taxonomy maps onto CLI exit codes: ConfigError -> 2,
// DataError -> 3, PipelineError -> 4.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class PipelineError : public std::runtime_error {
public:
    explicit PipelineError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric / tensor usage errors.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

class ValueError : public std::invalid_argument {
public:
    explicit ValueError(const std::string& msg) : std::invalid_argument(msg) {}
};

}  // namespace ctnorm
