#pragma once

#include <stdexcept>
#include <string>

namespace aqua {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A required file or directory does not exist.
class MissingInput : public Error {
 public:
  using Error::Error;
};

/// An artifact exists but cannot be decoded.
class CorruptArtifact : public Error {
 public:
  using Error::Error;
};

/// Training or rendering produced a non-finite value.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

// Process exit codes shared by the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitMissingInput = 2;
inline constexpr int kExitCorruptArtifact = 3;
inline constexpr int kExitNumericalFailure = 4;

}  // namespace aqua
