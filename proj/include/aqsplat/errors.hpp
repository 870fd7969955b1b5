#pragma once

#include <stdexcept>
#include <string>

namespace aqsp {

/// Non-finite or out-of-domain numeric input to a parameterization.
class ParameterDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An API was called in a state that does not allow it (missing cache, bad shapes).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingFileError : public LoadError {
 public:
  using LoadError::LoadError;
};

class MalformedRecordError : public LoadError {
 public:
  using LoadError::LoadError;
};

class SizeMismatchError : public LoadError {
 public:
  using LoadError::LoadError;
};

class ChecksumError : public LoadError {
 public:
  using LoadError::LoadError;
};

/// Raised when training produces a non-finite loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aqsp
