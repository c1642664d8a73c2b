#pragma once

#include <stdexcept>
#include <string>

namespace periodplr {

// Exit-code mapping for the CLI: validation -> 2, numerical -> 3, io -> 4.
struct validation_error : std::runtime_error {
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace periodplr
