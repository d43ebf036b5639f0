#pragma once

#include <stdexcept>
#include <string>

namespace ldyn {

/// Shapes or extents that do not fit together.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values appeared where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed external input (CSV rows, archives, config documents).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ldyn
