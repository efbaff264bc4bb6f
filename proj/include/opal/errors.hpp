#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace opal {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by dataset / checkpoint loaders; carries the offending record index
// (0 is the header record).
class FormatError : public Error {
 public:
  FormatError(std::size_t record, const std::string& what)
      : Error("record " + std::to_string(record) + ": " + what), record_(record) {}

  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace opal
