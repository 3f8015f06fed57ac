#pragma once

#include <stdexcept>
#include <string>

namespace fueltraj {

// Malformed user input: config files, track files, CLI values.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Raised by kinematic evaluation when the projected speed along the spine is
// non-positive (the arc-length parameterization breaks down there).
class NonForwardProgress : public std::runtime_error {
 public:
  explicit NonForwardProgress(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace fueltraj
