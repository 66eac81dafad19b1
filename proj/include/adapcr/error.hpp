#pragma once

#include <stdexcept>
#include <string>

namespace adapcr {

/// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorCategory {
    Parse,
    Conflict,
    Lookup,
    Contract,
    Transport,
    Config,
    Precondition,
    Numeric,
};

const char* to_string(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error(ErrorCategory::Parse, "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConflictError : public Error {
public:
    explicit ConflictError(std::string key)
        : Error(ErrorCategory::Conflict, "duplicate id: " + key), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class LookupError : public Error {
public:
    explicit LookupError(const std::string& message) : Error(ErrorCategory::Lookup, message) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& message) : Error(ErrorCategory::Contract, message) {}
};

/// Network failure talking to a remote provider. Always retryable.
class TransportError : public Error {
public:
    TransportError(const std::string& message, int attempts)
        : Error(ErrorCategory::Transport, message), attempts_(attempts) {}

    bool retryable() const noexcept { return true; }
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error(ErrorCategory::Config, message) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& message) : Error(ErrorCategory::Precondition, message) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& message) : Error(ErrorCategory::Numeric, message) {}
};

}  // namespace adapcr
