#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace loft {

/// Operand shapes do not agree (matrix columns vs pattern length, batch dims, ...).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value lies outside the domain an operation accepts (e.g. image export of v > 1).
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// NaN or Inf showed up in a tensor, a loss, or a gradient.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An object was used in a state that does not allow the call (optimizer step without gradients).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed container header. `offset` is the byte position where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Payload shorter than its header declares, or declared length disagrees with dims.
class TruncationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace loft
