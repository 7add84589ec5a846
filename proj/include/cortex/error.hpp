// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cortex {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents or model/state layouts.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Misuse of the autodiff tape (non-scalar loss, consumed tape, ...).
class GraphError : public Error {
public:
    using Error::Error;
};

/// Malformed or incompatible file contents (bad magic, version, truncation).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values or violated preconditions on user input.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or activations during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace cortex
