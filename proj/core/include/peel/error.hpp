#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace peel {

// Root of every exception thrown by the library. The CLI maps subclasses onto
// exit codes (see ExitCategory).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with the shape of data handed to the library: malformed chains,
// bad transcripts, LLM payloads that never conform. CLI exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Statistical preconditions (empty inputs, zero totals, shape mismatches).
class InputError : public Error {
 public:
  using Error::Error;
};

class UnknownPremiseType : public ValidationError {
 public:
  explicit UnknownPremiseType(std::string raw)
      : ValidationError("unknown premise type: '" + raw + "'"), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class CycleDetected : public ValidationError {
 public:
  explicit CycleDetected(std::vector<std::string> cycle);
  const std::vector<std::string>& cycle() const noexcept { return cycle_; }

 private:
  std::vector<std::string> cycle_;
};

class UnknownNode : public ValidationError {
 public:
  explicit UnknownNode(const std::string& label)
      : ValidationError("unknown node: " + label) {}
};

class ParseError : public ValidationError {
 public:
  ParseError(std::size_t offset, std::vector<std::string> expected, const std::string& input);
  std::size_t offset() const noexcept { return offset_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
};

class MixedOperators : public ValidationError {
 public:
  explicit MixedOperators(std::size_t offset)
      : ValidationError("'+' and evaluation operator mixed in one expression at byte " +
                        std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// A stored chain document that does not follow the canonical schema.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MalformedOutput : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyTranscript : public ValidationError {
 public:
  EmptyTranscript() : ValidationError("transcript has no turns") {}
};

class FormatError : public ValidationError {
 public:
  FormatError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CorruptArtifact : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class WriteOnceViolation : public Error {
 public:
  using Error::Error;
};

class NotCausal : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnmappedQuestion : public ValidationError {
 public:
  explicit UnmappedQuestion(std::string question_id)
      : ValidationError("question has no theme mapping: " + question_id),
        question_id_(std::move(question_id)) {}
  const std::string& question_id() const noexcept { return question_id_; }

 private:
  std::string question_id_;
};

class EmptyInput : public InputError {
 public:
  explicit EmptyInput(const std::string& what = "empty input") : InputError(what) {}
};

class ZeroTotal : public InputError {
 public:
  using InputError::InputError;
};

class DimensionMismatch : public InputError {
 public:
  using InputError::InputError;
};

class ZeroExpected : public InputError {
 public:
  using InputError::InputError;
};

class DegeneratePool : public InputError {
 public:
  DegeneratePool() : InputError("pooled proportion is 0 or 1; z statistic undefined") {}
};

// Transport or HTTP failure after the retry budget is spent. CLI exit code 1.
class BackendError : public Error {
 public:
  using Error::Error;
};

// Wrong command usage, including running a stage before its inputs exist.
// CLI exit code 3.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace peel
