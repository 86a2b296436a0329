#pragma once

#include <stdexcept>
#include <string>

namespace isect {

enum class ErrorKind {
    Parse,
    EmptyDataset,
    Io,
    Domain,
    Precondition,
    DimensionMismatch,
    IllConditionedKernel,
    NumericalFailure,
    OptimizationFailed,
    SingularCovariance,
    Convergence,
    DegenerateClustering,
    InsufficientCluster,
    Range,
    SchemaMismatch,
    CorruptFile,
    Config,
    OutOfOrder,
    Aggregate,
};

const char* to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so callers (and the CLI)
// can branch on the category without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace isect
