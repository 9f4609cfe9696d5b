#include "dh/errors.hpp"

namespace dh {

Error::Error(std::string kind, const std::string& message)
    : std::runtime_error(message), kind_(std::move(kind)) {}

NonConvergence::NonConvergence(const std::string& message, std::vector<double> history)
    : Error("NonConvergence", message), history_(std::move(history)) {}

ParseError::ParseError(const std::string& message, int line, int column)
    : Error("ParseError", "line " + std::to_string(line) + ", column " + std::to_string(column) +
                              ": " + message),
      line_(line),
      column_(column) {}

}  // namespace dh
