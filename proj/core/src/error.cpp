#include "patchstyle/error.hpp"

namespace patchstyle {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::empty_input: return "empty_input";
        case ErrorCode::dimension_mismatch: return "dimension_mismatch";
        case ErrorCode::pairing: return "pairing";
        case ErrorCode::index_out_of_range: return "index_out_of_range";
        case ErrorCode::sampling: return "sampling";
        case ErrorCode::config: return "config";
        case ErrorCode::channel_mismatch: return "channel_mismatch";
        case ErrorCode::io: return "io";
        case ErrorCode::resource: return "resource";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::not_found: return "not_found";
    }
    return "unknown";
}

}  // namespace patchstyle
