#pragma once

#include <stdexcept>
#include <string>

namespace mrsim {

/// Operand dimensions do not agree.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A scalar argument is outside its admissible domain.
class ParameterError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent on-disk data (matrices, checkpoints, datasets).
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A computed result broke one of the library's numerical guarantees.
class NumericalContractError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace mrsim
