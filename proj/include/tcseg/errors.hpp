#pragma once

#include <stdexcept>
#include <string>

namespace tcseg {

// Bad shapes, out-of-domain parameters, malformed configuration.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Operation invoked on an object in the wrong state (missing grads, untaped tensors).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Malformed or truncated binary/text input.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A metric that is undefined for its inputs (e.g. surface distance to an empty mask).
class UndefinedMetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Non-finite loss or other unrecoverable training failure.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tcseg
