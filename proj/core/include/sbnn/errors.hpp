#pragma once

#include <stdexcept>
#include <string>

namespace sbnn {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A caller-supplied value violates a documented precondition.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(what) {}
};

/// A numerical routine could not complete (factorization breakdown,
/// divergence, non-finite intermediate).  `index` locates the failure:
/// the pivot for a factorization, the step for an iteration, -1 if
/// no single index applies.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, long index = -1)
      : Error(what), index(index) {}
  long index;
};

/// A file or stream does not match the documented on-disk layout.
/// `record` is the zero-based record or line where parsing stopped,
/// -1 when the failure is not tied to a position.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what, long record = -1)
      : Error(what), record(record) {}
  long record;
};

/// More data was requested than a source can provide.
class InsufficientData : public Error {
 public:
  InsufficientData(const std::string& what, long available, long requested)
      : Error(what), available(available), requested(requested) {}
  long available;
  long requested;
};

/// Filesystem-level failure (open, write, rename).
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

/// The requested operation is not defined for the given model variant.
class UnsupportedVariant : public Error {
 public:
  explicit UnsupportedVariant(const std::string& what) : Error(what) {}
};

}  // namespace sbnn
