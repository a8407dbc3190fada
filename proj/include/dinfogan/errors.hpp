#pragma once

#include <stdexcept>
#include <string>

namespace dinfogan {

// Invalid user-supplied configuration (exit code 2 at the CLI boundary).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition (shapes, empty batches, ranges).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Source archives missing, unreadable or failing checksum verification.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArchitectureMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric cannot be computed on the given input (e.g. single-class table).
class UndefinedMetric : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A loss became NaN/Inf; what() carries the diagnostic dump.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dinfogan
