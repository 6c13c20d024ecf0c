#pragma once

#include <atomic>
#include <stdexcept>
#include <string>

namespace dhag {

// Error taxonomy. The CLI maps these onto exit codes: config/dimension/io/metric
// problems are user errors (exit 2), numeric failures are exit 3.
struct DhagError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : DhagError {
    using DhagError::DhagError;
};

struct ConfigError : DhagError {
    using DhagError::DhagError;
};

struct NumericError : DhagError {
    using DhagError::DhagError;
};

struct IoError : DhagError {
    using DhagError::DhagError;
};

struct MetricError : DhagError {
    using DhagError::DhagError;
};

struct StateError : DhagError {
    using DhagError::DhagError;
};

// Warnings go to stderr and bump a process-wide counter so tests can assert
// that a path warned without capturing the stream.
void log_warn(const std::string& msg);
std::size_t warning_count();

}  // namespace dhag
