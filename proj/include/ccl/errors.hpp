#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ccl {

// Every error carries a short machine-readable category; the CLI prints it
// verbatim as the first token of its one-line failure message.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

// Raised when an L2 normalization sees a (near) zero vector.
class DegenerateVectorError : public Error {
 public:
  explicit DegenerateVectorError(const std::string& what)
      : Error("degenerate", what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error("parse", source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ccl
