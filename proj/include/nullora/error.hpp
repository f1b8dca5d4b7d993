// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace nullora {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Bad argument value (odd rank, non-positive threshold, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Iterative SVD hit its sweep cap.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A stored layer no longer satisfies its structural invariants
/// (corrupted file or mismatched checkpoint).
class InvariantViolation : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public Error {
public:
    using Error::Error;
};

enum class FormatErrc {
    io,
    bad_magic,
    unsupported_version,
    truncated,
    bad_header,
    duplicate_name,
    invalid_name,
    shape_mismatch,
    non_finite,
    missing_tensor,
    layer_mismatch,
};

const char* to_string(FormatErrc code) noexcept;

/// Malformed or inconsistent tensor / adapter file.
class FormatError : public Error {
public:
    FormatError(FormatErrc code, const std::string& what)
        : Error(std::string(to_string(code)) + ": " + what), code_(code) {}

    FormatErrc code() const noexcept { return code_; }

private:
    FormatErrc code_;
};

} // namespace nullora
