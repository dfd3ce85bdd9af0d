#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Configuration rejected; `key` names the offending field.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string key, const std::string& msg)
      : std::runtime_error(msg), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Vector/matrix length does not match the expected layout.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument to an operation (empty batch, n too small, ...).
class ArgumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A parameter that requires a session reset was changed live.
class ColdParamError : public std::runtime_error {
 public:
  ColdParamError(std::string key, const std::string& msg)
      : std::runtime_error(msg), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Hot parameter value outside its allowed range.
class RangeError : public std::runtime_error {
 public:
  RangeError(std::string key, const std::string& msg)
      : std::runtime_error(msg), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class UnknownClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedsim
