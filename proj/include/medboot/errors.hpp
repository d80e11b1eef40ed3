#pragma once

#include <stdexcept>
#include <string>

namespace medboot {

/// Base class for every failure raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// I/O and ingestion
class IoError : public Error {
 public:
  using Error::Error;
};
class ParseError : public Error {
 public:
  using Error::Error;
};
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Estimation
class SingularDesign : public Error {
 public:
  using Error::Error;
};
class TooFewRows : public Error {
 public:
  using Error::Error;
};
class EmptyInput : public Error {
 public:
  using Error::Error;
};
class NegativeOperand : public Error {
 public:
  using Error::Error;
};

// Imputation
class AllMissingColumn : public Error {
 public:
  using Error::Error;
};
class AllMissingRow : public Error {
 public:
  using Error::Error;
};
class InsufficientData : public Error {
 public:
  using Error::Error;
};
class NonPositiveDefinite : public Error {
 public:
  using Error::Error;
};
class ChainDivergence : public Error {
 public:
  using Error::Error;
};

// Bootstrap
class TooFewReplicates : public Error {
 public:
  using Error::Error;
};
class InvalidLevel : public Error {
 public:
  using Error::Error;
};
class AllReplicatesFailed : public Error {
 public:
  using Error::Error;
};

// Sensitivity
class UndefinedDeviance : public Error {
 public:
  using Error::Error;
};

}  // namespace medboot
