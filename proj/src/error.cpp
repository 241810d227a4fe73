#include "tdaport/error.hpp"

namespace tdaport {

const char* error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
        case ErrorCode::Io: return "IO";
        case ErrorCode::Parse: return "PARSE";
        case ErrorCode::DegenerateSeries: return "DEGENERATE_SERIES";
        case ErrorCode::BudgetExceeded: return "BUDGET_EXCEEDED";
        case ErrorCode::Config: return "CONFIG";
    }
    return "UNKNOWN";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

namespace {
std::string stage_message(const std::string& stage, const std::string& ticker, const Error& cause) {
    std::string msg = "[" + stage + "]";
    if (!ticker.empty()) msg += " ticker " + ticker + ":";
    return msg + " " + cause.what();
}
}  // namespace

StageError::StageError(std::string stage, std::string ticker, const Error& cause)
    : Error(cause.code(), stage_message(stage, ticker, cause)),
      stage_(std::move(stage)),
      ticker_(std::move(ticker)) {}

}  // namespace tdaport
