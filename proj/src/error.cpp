#include "xverify/error.hpp"

namespace xverify {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParameter: return "invalid-parameter";
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::DegenerateImage: return "degenerate-image";
        case ErrorKind::DegenerateSplit: return "degenerate-split";
        case ErrorKind::InsufficientData: return "insufficient-data";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Io: return "io";
        case ErrorKind::NotFound: return "not-found";
        case ErrorKind::Backend: return "backend";
        case ErrorKind::Locked: return "locked";
    }
    return "unknown";
}

}  // namespace xverify
