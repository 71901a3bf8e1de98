// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace maura {

// Bad user input: malformed configs, shape preconditions, file formats.
// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or mismatched on-disk data. Still a validation failure at the CLI.
class FormatError : public ValidationError {
public:
    explicit FormatError(const std::string& msg) : ValidationError(msg) {}
};

// Numerical breakdown: NaN losses, failed gradient checks. Exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

// Literal-message overload: no std::string materializes on the happy path.
inline void require(bool cond, const char* msg) {
    if (!cond) throw ValidationError(msg);
}

} // namespace maura
