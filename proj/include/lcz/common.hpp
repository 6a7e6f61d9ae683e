#pragma once

#include <stdexcept>
#include <string>

namespace lcz {

enum class ErrorKind {
    io,              // missing/unreadable/unwritable files
    malformed,       // corrupt or inconsistent file contents
    out_of_bounds,   // window or point outside the grid extent
    nodata,          // nodata contamination where clean data is required
    geometry,        // co-registration / grid geometry mismatch
    invalid_argument,
    dimension,       // shape mismatch between tensors/vectors
    diverged,        // non-finite loss during training
};

/// Exception carrying a machine-checkable kind next to the message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io: return "io";
        case ErrorKind::malformed: return "malformed";
        case ErrorKind::out_of_bounds: return "out_of_bounds";
        case ErrorKind::nodata: return "nodata";
        case ErrorKind::geometry: return "geometry";
        case ErrorKind::invalid_argument: return "invalid_argument";
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::diverged: return "diverged";
    }
    return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

} // namespace lcz
