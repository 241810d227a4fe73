#pragma once

#include <stdexcept>
#include <string>

namespace tdaport {

enum class ErrorCode {
    InvalidArgument,
    Io,
    Parse,
    DegenerateSeries,
    BudgetExceeded,
    Config,
};

/// Name used in messages, e.g. "DEGENERATE_SERIES".
const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Error raised by a pipeline stage; carries the stage name and, when a
/// single stock is at fault, its ticker.
class StageError : public Error {
public:
    StageError(std::string stage, std::string ticker, const Error& cause);

    [[nodiscard]] const std::string& stage() const noexcept { return stage_; }
    [[nodiscard]] const std::string& ticker() const noexcept { return ticker_; }

private:
    std::string stage_;
    std::string ticker_;
};

}  // namespace tdaport
