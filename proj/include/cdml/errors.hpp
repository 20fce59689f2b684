#pragma once

#include <stdexcept>
#include <string>

namespace cdml {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input/validation failures. The CLI maps these to exit code 2.
class InputError : public Error {
public:
    using Error::Error;
};

class SchemaError : public InputError {
public:
    using InputError::InputError;
};

class ValueError : public InputError {
public:
    using InputError::InputError;
};

class FoldError : public InputError {
public:
    using InputError::InputError;
};

class BoundsError : public InputError {
public:
    using InputError::InputError;
};

// Estimation-time failures. The CLI maps these to exit code 3.
class EstimationError : public Error {
public:
    using Error::Error;
};

class LearnerError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class DegenerateFoldError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class DegenerateArmError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class BootstrapError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class SimulationError : public EstimationError {
public:
    SimulationError(int replicate, const std::string& what)
        : EstimationError("replicate " + std::to_string(replicate) + ": " + what), replicate_(replicate) {}

    int replicate() const noexcept { return replicate_; }

private:
    int replicate_;
};

}  // namespace cdml
