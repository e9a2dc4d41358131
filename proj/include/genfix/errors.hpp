// Copyright (C) 2026 The genfix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

#include <torch/torch.h>

namespace genfix {

// Argument outside an operation's documented domain.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Persisted data (checkpoint, manifest, token grid) failed validation.
class CorruptData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A required upstream artifact (checkpoint, trained model) is missing.
class DependencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DatasetBuildError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw InvalidArgument(message);
    }
}

inline void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (!a.sizes().equals(b.sizes())) {
        throw InvalidArgument(std::string(what) + ": shape mismatch");
    }
}

}  // namespace detail
}  // namespace genfix
