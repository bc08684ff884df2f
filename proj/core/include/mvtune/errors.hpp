#pragma once

#include <stdexcept>
#include <string>

namespace mvtune {

/// Broad failure classes, used by the CLI to pick an exit code.
enum class ErrorKind {
    InvalidInput,   ///< malformed data, bad parameters, schema violations
    Infeasible,     ///< constraints cannot be met (plan or workload level)
    Training,       ///< model fitting failed (degenerate observations, too few points)
    Io,             ///< filesystem or serialization failures
    Internal,       ///< invariant violations that indicate a bug
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

struct InvalidInputError : Error {
    explicit InvalidInputError(const std::string& msg) : Error(ErrorKind::InvalidInput, msg) {}
};

/// A query that no index in the configuration can serve.
struct InfeasiblePlanError : Error {
    explicit InfeasiblePlanError(const std::string& msg) : Error(ErrorKind::Infeasible, msg) {}
};

/// No configuration satisfies the workload constraints.
struct InfeasibleWorkloadError : Error {
    explicit InfeasibleWorkloadError(const std::string& msg) : Error(ErrorKind::Infeasible, msg) {}
};

struct TrainingError : Error {
    explicit TrainingError(const std::string& msg) : Error(ErrorKind::Training, msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(ErrorKind::Io, msg) {}
};

} // namespace mvtune
