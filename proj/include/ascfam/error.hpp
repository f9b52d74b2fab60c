#pragma once

#include <stdexcept>
#include <string>

namespace ascfam {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (files, options, pedigree structure).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine could not produce a result (non-PD matrix, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The pedigree shape is outside what the likelihood code supports.
class TopologyError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace ascfam
