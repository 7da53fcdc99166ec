#pragma once

#include <stdexcept>
#include <string>

namespace layerpool {

/// Thrown when an argument violates an operation's precondition or a type invariant.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace layerpool
