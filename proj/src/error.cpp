#include "skelfit/error.hpp"

namespace skelfit {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Argument:
      return "argument";
    case ErrorKind::Parse:
      return "parse";
    case ErrorKind::EmptyInput:
      return "empty_input";
    case ErrorKind::Io:
      return "io";
    case ErrorKind::Degenerate:
      return "degenerate";
    case ErrorKind::Divergence:
      return "divergence";
  }
  return "unknown";
}

namespace {
std::string parse_message(const std::string& path, std::size_t line, const std::string& what) {
  if (line == 0) return path + ": " + what;
  return path + ":" + std::to_string(line) + ": " + what;
}
}  // namespace

ParseError::ParseError(const std::string& path, std::size_t line, const std::string& what)
    : Error(ErrorKind::Parse, parse_message(path, line, what)), path_(path), line_(line) {}

}  // namespace skelfit
