#pragma once

#include <stdexcept>
#include <string>

namespace rfadv {

/// Thrown when a caller passes arguments that violate an operation's
/// preconditions (shape mismatch, empty inputs, malformed files, ...).
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

/// A pipeline stage needs an artifact an earlier stage has not produced.
class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rfadv
