#pragma once

#include <stdexcept>
#include <string>

namespace poro {

// Error categories map 1:1 onto CLI exit codes.
enum ExitCode : int {
    exit_ok = 0,
    exit_config = 2,
    exit_numeric = 3,
    exit_artifact = 4,
};

class Error : public std::runtime_error {
public:
    Error(std::string msg, int code) : std::runtime_error(std::move(msg)), code_(code) {}
    int exit_code() const { return code_; }

private:
    int code_;
};

/// Invalid or inconsistent configuration / CLI input.
class ConfigError : public Error {
public:
    explicit ConfigError(std::string msg) : Error(std::move(msg), exit_config) {}
};

/// Numerical failure: singular system, non-convergence, NaN/Inf mid-run.
class NumericError : public Error {
public:
    explicit NumericError(std::string msg) : Error(std::move(msg), exit_numeric) {}
};

/// Missing, truncated or otherwise unusable on-disk artifact.
class ArtifactError : public Error {
public:
    explicit ArtifactError(std::string msg) : Error(std::move(msg), exit_artifact) {}
};

} // namespace poro
