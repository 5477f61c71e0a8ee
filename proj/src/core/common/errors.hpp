#pragma once

#include <stdexcept>
#include <string>

namespace sslseg {

// Root of every error the toolkit raises. The C API maps each subclass to
// its own status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration (counts, sizes, unknown keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Argument values that violate an operation's preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Reading manifests, images or other input files failed.
class IngestionError : public Error {
 public:
  using Error::Error;
};

// Checkpoint segments do not fit the target network.
class TransferError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during optimisation (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Writing outputs failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sslseg
