#pragma once

#include <stdexcept>
#include <string>

namespace fractal {

// Input problems (bad spec, bad config, violated hypotheses) map to exit code 2,
// numerical trouble (singular solves, divergent gates) to exit code 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
    virtual int exit_code() const { return 2; }
    virtual const char* kind() const { return "error"; }
};

struct StructuralError : Error {
    using Error::Error;
    const char* kind() const override { return "structural"; }
};

struct CapacityError : Error {
    using Error::Error;
    const char* kind() const override { return "capacity"; }
};

struct DomainError : Error {
    using Error::Error;
    const char* kind() const override { return "domain"; }
};

struct ConfigError : Error {
    using Error::Error;
    const char* kind() const override { return "config"; }
};

struct ModelError : Error {
    using Error::Error;
    const char* kind() const override { return "model"; }
};

struct SingularityError : Error {
    using Error::Error;
    int exit_code() const override { return 3; }
    const char* kind() const override { return "singularity"; }
};

struct NumericalError : Error {
    using Error::Error;
    int exit_code() const override { return 3; }
    const char* kind() const override { return "numerical"; }
};

struct GateFailure : Error {
    using Error::Error;
    int exit_code() const override { return 3; }
    const char* kind() const override { return "gate"; }
};

}  // namespace fractal
