#pragma once

#include <stdexcept>
#include <string>

namespace graspall {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Violated precondition or malformed argument.
struct InvalidArgument : Error {
    using Error::Error;
};

/// Unreadable, inconsistent or missing external data (files, formats, config).
struct DataError : Error {
    using Error::Error;
};

/// Non-finite values or numerically impossible requests.
struct NumericError : Error {
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

} // namespace graspall
