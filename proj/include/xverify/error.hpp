#pragma once

#include <stdexcept>
#include <string>

namespace xverify {

enum class ErrorKind {
    InvalidParameter,
    InvalidArgument,
    DegenerateImage,
    DegenerateSplit,
    InsufficientData,
    Parse,
    Io,
    NotFound,
    Backend,
    Locked,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (CLI exit
/// codes, HTTP status mapping) can dispatch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace xverify
