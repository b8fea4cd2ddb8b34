#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dialogcode {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A document could not be parsed. `where` names the line, record or field.
class MalformedDocumentError : public Error {
 public:
  MalformedDocumentError(std::string where, const std::string& what)
      : Error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

// A document parsed but violates invariants. Carries every violation found.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "validation failed";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

class RenderError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class CredentialError : public Error {
 public:
  using Error::Error;
};

// The provider refused the request outright; retrying will not help.
class RequestRejectedError : public TransportError {
 public:
  using TransportError::TransportError;
};

// The provider rejected the request because the prompt is too long.
class ContextLimitError : public TransportError {
 public:
  using TransportError::TransportError;
};

// No label could be resolved from a model reply. Keeps the raw reply.
class ResponseParseError : public Error {
 public:
  ResponseParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

}  // namespace dialogcode
