#pragma once

#include <stdexcept>
#include <string>

namespace actbench {

/// Shape or size disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on an operation's arguments does not hold.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class LabelError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Unknown activation name, or an activation that cannot be composed.
class RegistryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent on-disk data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two files that must describe the same examples disagree.
class ConsistencyError : public FormatError {
 public:
  using FormatError::FormatError;
};

class MissingFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace actbench
