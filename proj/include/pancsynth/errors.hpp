#pragma once

#include <stdexcept>
#include <string>

namespace pancsynth {

/// File-system or codec failure (unreadable file, bad header, unwritable path).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or data invariant does not hold (empty mask, geometry
/// mismatch, degenerate samples, ...).
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pancsynth
