#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace rubriclearn {

/// Base for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A corpus, split, config, or cache file could not be parsed.
class ParseError : public Error {
public:
    ParseError(std::size_t row, const std::string& reason)
        : Error("row " + std::to_string(row) + ": " + reason), row_(row) {}
    explicit ParseError(const std::string& reason) : Error(reason) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_ = 0;
};

/// A domain invariant does not hold (offsets, duplicate ids, empty text...).
class InvariantError : public Error {
public:
    InvariantError(std::string subject, std::string invariant)
        : Error(subject + ": " + invariant), subject_(std::move(subject)) {}

    const std::string& subject() const noexcept { return subject_; }

private:
    std::string subject_;
};

/// Structured output or serialized value does not match its schema.
/// `path` names the offending key, e.g. `comment_scores[1].content_score`.
class SchemaError : public Error {
public:
    SchemaError(std::string path, const std::string& reason)
        : Error(path.empty() ? reason : path + ": " + reason), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// A numeric field parsed correctly but lies outside its allowed range.
class OutOfRangeError : public SchemaError {
public:
    using SchemaError::SchemaError;
};

/// No JSON object could be located in a model response.
class NoJsonFoundError : public SchemaError {
public:
    explicit NoJsonFoundError(const std::string& reason) : SchemaError("", reason) {}
};

/// Transient failure talking to a provider; eligible for retry.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Credentials rejected. Never retried.
class AuthError : public Error {
public:
    using Error::Error;
};

/// Request refused on content-policy grounds. Never retried.
class PolicyError : public Error {
public:
    using Error::Error;
};

/// Non-retryable provider failure that is neither auth nor policy.
class ProviderError : public Error {
public:
    using Error::Error;
};

/// All retry attempts failed; carries the last transport error text.
class ExhaustedRetriesError : public Error {
public:
    ExhaustedRetriesError(int attempts, const std::string& last_error)
        : Error("exhausted " + std::to_string(attempts) + " attempts: " + last_error),
          attempts_(attempts), last_error_(last_error) {}

    int attempts() const noexcept { return attempts_; }
    const std::string& last_error() const noexcept { return last_error_; }

private:
    int attempts_;
    std::string last_error_;
};

/// Embedding response unusable: zero vector or wrong dimensionality.
class EmbeddingError : public Error {
public:
    using Error::Error;
};

/// The configured call budget would be exceeded.
class BudgetExceededError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration or CLI flags.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace rubriclearn
