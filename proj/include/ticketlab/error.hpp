// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0

#ifndef TICKETLAB_ERROR_HPP
#define TICKETLAB_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ticketlab {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Architecture, schedule or experiment settings that cannot be honoured.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Bad caller-supplied data (labels, batches, masks).
class InputError : public Error {
public:
    using Error::Error;
};

/// An API used out of order or with an unsupported combination of arguments.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Malformed IDX / CIFAR-10 binary files.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Raised by the optimizer when a parameter gradient is NaN or infinite.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::size_t layer)
        : Error(what + " (prunable layer " + std::to_string(layer) + ")"), layer_(layer) {}

    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

}  // namespace ticketlab

#endif  // TICKETLAB_ERROR_HPP
