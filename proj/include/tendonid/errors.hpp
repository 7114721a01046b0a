#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tendonid {

/// Error categories; the numeric value is the CLI exit code.
enum class ErrorCode : int {
    Config = 2,
    Data = 3,
    Numeric = 4,
    Infeasible = 5,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorCode::Config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorCode::Data, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorCode::Numeric, what) {}
};

/// Raised when a free-run simulation leaves the |value| <= 1e6 envelope.
class DivergenceError : public NumericError {
public:
    explicit DivergenceError(const std::string& what) : NumericError(what) {}
};

class InfeasibleError : public Error {
public:
    explicit InfeasibleError(const std::string& what) : Error(ErrorCode::Infeasible, what) {}
};

}  // namespace tendonid
