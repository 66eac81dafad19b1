#include "adapcr/error.hpp"

namespace adapcr {

const char* to_string(ErrorCategory category) noexcept {
    switch (category) {
        case ErrorCategory::Parse: return "parse";
        case ErrorCategory::Conflict: return "conflict";
        case ErrorCategory::Lookup: return "lookup";
        case ErrorCategory::Contract: return "contract";
        case ErrorCategory::Transport: return "transport";
        case ErrorCategory::Config: return "config";
        case ErrorCategory::Precondition: return "precondition";
        case ErrorCategory::Numeric: return "numeric";
    }
    return "unknown";
}

}  // namespace adapcr
