#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lorekt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform for an op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced where finite values are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Parse failure that can be pinned to a line of an input file.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class BadMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class VersionMismatchError : public CheckpointError {
 public:
  VersionMismatchError(std::uint32_t found, std::uint32_t expected);
  std::uint32_t found() const { return found_; }
  std::uint32_t expected() const { return expected_; }

 private:
  std::uint32_t found_;
  std::uint32_t expected_;
};

class TruncatedFileError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class DigestMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace lorekt
