#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace meshdiff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input is syntactically fine but structurally inconsistent (bad indices).
class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what) : Error(what), line_(0) {}
  StructuralError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  /// 0 when the error did not come from text input.
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyMeshError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or truncated binary container; carries the byte offset.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : Error("at byte offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Non-finite loss during training; carries the offending example index.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t example, const std::string& what)
      : Error(what + " (example " + std::to_string(example) + ")"), example_(example) {}
  std::size_t example() const { return example_; }

 private:
  std::size_t example_;
};

}  // namespace meshdiff
