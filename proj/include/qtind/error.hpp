// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qtind {

/// Base class of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (collection, queries, qrels, tables, runs).
class LoadError : public Error {
public:
    LoadError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
    explicit LoadError(const std::string& what) : Error(what), line_(0) {}

    /// 1-based line number, 0 when the error is not tied to a line.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A precondition of a numeric routine was violated by the caller.
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Index construction failed (bad scorer output, unknown doc ids).
class BuildError : public Error {
public:
    using Error::Error;
};

}  // namespace qtind
