#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tipping {

enum class ErrorKind {
    InvalidArgument,
    DimMismatch,
    EmptyInput,
    NonFinite,
    ZeroNorm,
    // HSF fixture format
    BadMagic,
    Truncated,
    ShapeMismatch,
    BadLabel,
    BadHeader,
    Io,
    MissingGroup,
    // dynamics / statistics
    Diverged,
    TooShort,
    NotConverged,
    Singular,
    Duplicate,
    UnknownRole,
    // service
    UnknownSession,
};

std::string_view to_string(ErrorKind kind);

// Domain error carrying a machine-checkable kind. Everything the engine
// rejects goes through this type; std::bad_alloc and friends are left alone.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace tipping
