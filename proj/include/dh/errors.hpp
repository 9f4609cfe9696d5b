#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dh {

/// Base of every error raised by the library. kind() is the stable machine name.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message);
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define DH_DECLARE_ERROR(Name)                                                 \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& message) : Error(#Name, message) {}   \
    };

DH_DECLARE_ERROR(ValidationError)
DH_DECLARE_ERROR(DivergenceError)
DH_DECLARE_ERROR(IllPosed)
DH_DECLARE_ERROR(EllipticityViolation)
DH_DECLARE_ERROR(EllipticityError)
DH_DECLARE_ERROR(ResolutionError)
DH_DECLARE_ERROR(InsufficientSamples)
DH_DECLARE_ERROR(DimensionMismatch)
DH_DECLARE_ERROR(StabilityError)
DH_DECLARE_ERROR(BlowUp)
DH_DECLARE_ERROR(IoError)
DH_DECLARE_ERROR(UsageError)

#undef DH_DECLARE_ERROR

class NonConvergence : public Error {
public:
    NonConvergence(const std::string& message, std::vector<double> history);
    const std::vector<double>& residual_history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, int line, int column);
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

}  // namespace dh
