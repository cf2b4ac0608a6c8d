#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vlrm {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

/// Malformed input text (bad JSON, bad number, ...). Carries the line number
/// when the input came from a line-oriented stream (0 = unknown).
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Structurally valid JSON that does not match the requested record schema.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& field, std::size_t line = 0)
      : Error((line ? "line " + std::to_string(line) + ": " : "") + "missing or invalid field \"" + field + "\""),
        field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// A record or argument violates a declared invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad or incomplete run configuration (unknown role, missing file, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An endpoint kept failing after all retry attempts.
class EndpointError : public Error {
 public:
  EndpointError(const std::string& role, int last_status, const std::string& detail)
      : Error("endpoint role \"" + role + "\" failed (last status " + std::to_string(last_status) + "): " + detail),
        role_(role),
        last_status_(last_status) {}
  const std::string& role() const { return role_; }
  int last_status() const { return last_status_; }

 private:
  std::string role_;
  int last_status_;
};

/// Endpoint answered with a non-retryable protocol error (4xx etc).
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& message, int status) : Error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// Neither verdict token appeared in the returned top-k log-probabilities.
class MissingVerdictError : public Error {
 public:
  using Error::Error;
};

/// A judge reply could not be reduced to a verdict even after the retry.
class JudgeParseError : public Error {
 public:
  using Error::Error;
};

/// The object extractor's reply could not be parsed into a label list.
class ExtractionParseError : public Error {
 public:
  using Error::Error;
};

/// A model returned an empty completion where text was required.
class EmptyResponseError : public Error {
 public:
  using Error::Error;
};

/// Sampled labels survived the rewrite even after the retry.
class AlterationFailedError : public Error {
 public:
  using Error::Error;
};

/// Rationale generation produced empty text twice.
class EmptyRationaleError : public Error {
 public:
  using Error::Error;
};

/// No usable injection candidate exists in the pool.
class InjectionError : public Error {
 public:
  using Error::Error;
};

/// Candidate sampling obtained fewer responses than requested.
class PartialSampleError : public Error {
 public:
  PartialSampleError(const std::string& message, std::vector<std::string> obtained)
      : Error(message), obtained_(std::move(obtained)) {}
  const std::vector<std::string>& obtained() const { return obtained_; }

 private:
  std::vector<std::string> obtained_;
};

/// Non-finite value where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Accuracy requested for a category with no results.
class EmptyCategoryError : public Error {
 public:
  using Error::Error;
};

}  // namespace vlrm
