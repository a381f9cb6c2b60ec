// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mrl {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A precondition on a value argument failed.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

class DimensionMismatch : public InvalidArgument {
 public:
  explicit DimensionMismatch(const std::string& msg) : InvalidArgument(msg) {}
};

/// NaN or infinity showed up where a finite value is required.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

}  // namespace mrl
