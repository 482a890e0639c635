#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skelfit {

enum class ErrorKind {
  Argument,    // precondition violated by the caller
  Parse,       // malformed file contents
  EmptyInput,  // a file or buffer held zero points
  Io,          // file could not be opened / written
  Degenerate,  // geometry that admits no answer (e.g. zero diagonal)
  Divergence,  // optimizer produced a non-finite loss
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed input file. `line` is 1-based; 0 when the failure is not tied to
/// a particular line (e.g. truncated header).
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what);

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

[[noreturn]] inline void throw_argument(const std::string& message) {
  throw Error(ErrorKind::Argument, message);
}

}  // namespace skelfit
