#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bousfem {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class MeshError : public Error {
public:
    using Error::Error;
};

class AssemblyError : public Error {
public:
    using Error::Error;
};

/// Linear solver failure; carries the residual history when the backend has one.
class SolveError : public Error {
public:
    SolveError(const std::string& what, std::vector<double> residual_history = {})
        : Error(what), residual_history(std::move(residual_history)) {}

    std::vector<double> residual_history;
};

/// Aggregated configuration validation failure: one message per violation.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : Error(join(violations)), violations(std::move(violations)) {}

    std::vector<std::string> violations;

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "invalid configuration:";
        for (const auto& m : v) {
            s += "\n  - " + m;
        }
        return s;
    }
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace bousfem
