#pragma once

#include <stdexcept>
#include <string>

namespace unnas {

/// Caller broke an operation's precondition (wrong shape, out-of-range index, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A label-free code path asked for annotated data.
class LabelAccessDenied : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input file or record.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejection sampling ran out of attempts.
class SamplingBudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace unnas
