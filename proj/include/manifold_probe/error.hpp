#pragma once

#include <stdexcept>
#include <string>

namespace manifold_probe {

/// Broad failure class. The CLI maps these onto exit codes.
enum class ErrorKind {
    invalid_argument, // bad flags or a violated precondition (exit 2)
    data,             // malformed or inconsistent input files (exit 3)
    numerical         // factorization failure, non-finite results (exit 4)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error invalid_argument(const std::string& message) { return Error(ErrorKind::invalid_argument, message); }
inline Error data_error(const std::string& message) { return Error(ErrorKind::data, message); }
inline Error numerical_error(const std::string& message) { return Error(ErrorKind::numerical, message); }

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::data: return "data";
    case ErrorKind::numerical: return "numerical";
    }
    return "unknown";
}

} // namespace manifold_probe
