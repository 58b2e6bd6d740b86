#pragma once

#include <stdexcept>
#include <string>

namespace restsec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A document (schema, auth config, corpus, plan) could not be parsed.
/// `location()` is a human readable position such as "line 4, column 2".
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string location)
      : Error(location.empty() ? what : what + " (at " + location + ")"),
        location_(std::move(location)) {}

  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Connection refused, DNS failure, broken socket. Timeouts are not
/// transport errors: they are reported on the ExecutedCall itself.
class TransportError : public Error {
 public:
  using Error::Error;
};

class CompositionError : public Error {
 public:
  using Error::Error;
};

/// Input generation could not satisfy a schema constraint.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace restsec
