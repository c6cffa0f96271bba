// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gramdiff {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
  public:
    using Error::Error;
};

class ConvergenceError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

// Sample statistics are unusable (zero variance, zero-norm reference, ...).
class DegenerateError : public Error {
  public:
    using Error::Error;
};

class PreconditionError : public Error {
  public:
    using Error::Error;
};

class InsufficientDataError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

class FormatError : public IoError {
  public:
    using IoError::IoError;
};

// NaN/Inf encountered during the reverse trajectory.
class DivergenceError : public Error {
  public:
    DivergenceError(std::size_t step, const std::string &what)
        : Error(what + " (reverse step t=" + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

  private:
    std::size_t step_;
};

} // namespace gramdiff
