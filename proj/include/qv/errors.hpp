#pragma once

#include <stdexcept>
#include <string>

namespace qv {

// Exit-code convention used by the CLI:
//   0 success, 2 usage error, 3 data error, 4 internal assertion.
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// QVS stream errors, one type per failure kind.
class BadMagicError : public DataError {
public:
    explicit BadMagicError(const std::string& msg) : DataError(msg) {}
};

class TruncatedStreamError : public DataError {
public:
    explicit TruncatedStreamError(const std::string& msg) : DataError(msg) {}
};

class ValueOverflowError : public DataError {
public:
    explicit ValueOverflowError(const std::string& msg) : DataError(msg) {}
};

// Raised when a mean readout is too close to the full well to invert.
class SaturationError : public std::runtime_error {
public:
    explicit SaturationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace qv
