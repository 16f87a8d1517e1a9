#pragma once

#include <stdexcept>
#include <string>

namespace patchstyle {

enum class ErrorCode {
    invalid_argument,
    empty_input,
    dimension_mismatch,
    pairing,
    index_out_of_range,
    sampling,
    config,
    channel_mismatch,
    io,
    resource,
    conflict,
    not_found,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace patchstyle
