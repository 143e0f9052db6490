#pragma once

#include <stdexcept>
#include <string>

namespace edr {

/// Mismatched tensor shapes; the message names both shapes.
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// A token id or coordinate out of range.
struct IndexError : std::out_of_range {
  explicit IndexError(const std::string& msg) : std::out_of_range(msg) {}
};

/// An API contract violated by the caller.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unreadable, corrupt, or shape-incompatible checkpoint.
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Missing or malformed corpus/vocabulary data.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A loss function expected to be deterministic produced two different values.
struct DeterminismError : std::runtime_error {
  explicit DeterminismError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace edr
