#pragma once

#include <stdexcept>
#include <string>

namespace canalrl {

// Caller supplied something outside an operation's domain (shape, range, sign).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation is not legal in the object's current state (e.g. stepping a finished episode).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed file contents. The message names the offending line when one is known.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace canalrl
