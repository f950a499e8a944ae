#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace regrel {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input violates a domain invariant (duplicate id, orphan node, bad enum).
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Lookup of an id that does not exist.
class NotFoundError : public Error {
  public:
    using Error::Error;
};

/// Text could not be parsed. Keeps the offending input for audit.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, std::string raw = {})
        : Error(what), m_raw(std::move(raw))
    {}

    const std::string& raw() const noexcept { return m_raw; }

  private:
    std::string m_raw;
};

/// A remote provider could not be reached after all retries.
class TransportError : public Error {
  public:
    TransportError(const std::string& what, int retries) : Error(what), m_retries(retries) {}

    int retries() const noexcept { return m_retries; }

  private:
    int m_retries;
};

/// A command conflicts with current state. Carries the current state as JSON text.
class ConflictError : public Error {
  public:
    ConflictError(const std::string& what, std::string current_state)
        : Error(what), m_current(std::move(current_state))
    {}

    const std::string& current_state() const noexcept { return m_current; }

  private:
    std::string m_current;
};

}  // namespace regrel
