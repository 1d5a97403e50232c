#pragma once

#include <stdexcept>
#include <string>

namespace empathic {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input file lacks a required column or field.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error("schema error: " + what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error("parse error: " + what) {}
};

// Truncated, corrupted or version-mismatched persisted artifact.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error("integrity error: " + what) {}
};

class InsufficientData : public Error {
 public:
  explicit InsufficientData(const std::string& what) : Error("insufficient data: " + what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("invalid argument: " + what) {}
};

}  // namespace empathic
