#pragma once

#include <stdexcept>
#include <string>

namespace floodsparse {

/// Dimension or size disagreement between operands.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A hyperparameter or numeric argument outside its legal range.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data (non-binary mask, bad CSV line, out-of-vocab token).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Two sparse operands whose row_ptr/col_idx disagree.
struct StructureError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An operation called before the state it depends on exists.
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace floodsparse
