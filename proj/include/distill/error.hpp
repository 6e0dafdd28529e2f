#pragma once

#include <stdexcept>
#include <string>

namespace distill {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or map dimensions that do not fit together.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf produced by a forward or backward pass.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file content.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid argument values (empty masks, bad labels, bad configs).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Invalid configuration; the message carries the offending field path.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A required upstream artifact is absent.
class MissingInput : public Error {
public:
    explicit MissingInput(std::string path)
        : Error("missing input: " + path), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Filesystem failures (unwritable directories, failed writes).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace distill
