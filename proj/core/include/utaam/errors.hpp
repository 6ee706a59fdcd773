#pragma once

#include <stdexcept>
#include <string>

namespace utaam {

/// Contract violation on caller-supplied data (bad dims, out-of-range index, ...).
class InvalidArgument : public std::invalid_argument {
public:
    explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

/// Failure while reading or writing an external artifact (file missing, bad magic, ...).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical breakdown inside a solver (non-finite objective, singular system, ...).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace utaam
