#include "isect/error.hpp"

namespace isect {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Parse: return "parse";
        case ErrorKind::EmptyDataset: return "empty-dataset";
        case ErrorKind::Io: return "io";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Precondition: return "precondition";
        case ErrorKind::DimensionMismatch: return "dimension-mismatch";
        case ErrorKind::IllConditionedKernel: return "ill-conditioned-kernel";
        case ErrorKind::NumericalFailure: return "numerical-failure";
        case ErrorKind::OptimizationFailed: return "optimization-failed";
        case ErrorKind::SingularCovariance: return "singular-covariance";
        case ErrorKind::Convergence: return "convergence";
        case ErrorKind::DegenerateClustering: return "degenerate-clustering";
        case ErrorKind::InsufficientCluster: return "insufficient-cluster";
        case ErrorKind::Range: return "range";
        case ErrorKind::SchemaMismatch: return "schema-mismatch";
        case ErrorKind::CorruptFile: return "corrupt-file";
        case ErrorKind::Config: return "config";
        case ErrorKind::OutOfOrder: return "out-of-order";
        case ErrorKind::Aggregate: return "aggregate";
    }
    return "unknown";
}

}  // namespace isect
