#pragma once

#include <stdexcept>
#include <string>

namespace encprov {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class MalformedAction : public Error {
 public:
  using Error::Error;
};

class DuplicateVertex : public Error {
 public:
  using Error::Error;
};

/// The model file failed to parse or its integrity MAC did not verify.
class ModelError : public Error {
 public:
  using Error::Error;
};

class ModelIntegrityError : public ModelError {
 public:
  using ModelError::ModelError;
};

class ChannelNotReady : public Error {
 public:
  using Error::Error;
};

class HandshakeFailed : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised by the extractor when a program cannot be turned into a model.
class ExtractionError : public Error {
 public:
  using Error::Error;
};

/// The simulated enclave hit a fault it could not recover from.
class EnclaveCrashed : public Error {
 public:
  using Error::Error;
};

class RuntimeFault : public Error {
 public:
  using Error::Error;
};

}  // namespace encprov
