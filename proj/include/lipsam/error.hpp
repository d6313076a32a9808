#pragma once

#include <stdexcept>
#include <string>

namespace lipsam {

enum class ErrorKind {
    Shape,
    InvalidWindow,
    Domain,
    UndefinedMetric,
    Format,
    Uncertified,
    Unbounded,
    Poisoned,
    Usage,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Shape: return "shape error";
        case ErrorKind::InvalidWindow: return "invalid window";
        case ErrorKind::Domain: return "domain error";
        case ErrorKind::UndefinedMetric: return "undefined metric";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Uncertified: return "uncertified";
        case ErrorKind::Unbounded: return "unbounded";
        case ErrorKind::Poisoned: return "poisoned";
        case ErrorKind::Usage: return "usage error";
    }
    return "error";
}

/// Single exception type for the library; `kind()` distinguishes the failure.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const char* what) {
    if (!condition) throw Error(kind, what);
}

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) throw Error(kind, what);
}

}  // namespace lipsam
