#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace docsynth {

// Maps onto CLI exit codes: Usage -> 2, Validation -> 3, Runtime -> 4.
enum class ErrorKind { Usage, Validation, Runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& message) {
  throw Error(ErrorKind::Validation, message);
}

[[noreturn]] inline void fail_runtime(const std::string& message) {
  throw Error(ErrorKind::Runtime, message);
}

inline void require(bool condition, std::string_view message) {
  if (!condition) fail_validation(std::string(message));
}

}  // namespace docsynth
