#pragma once

#include <stdexcept>
#include <string>

namespace depkit {

/// Base class for all toolkit errors. Subcommands map these to exit code 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedModel : Error {
    using Error::Error;
};
struct MalformedInput : Error {
    using Error::Error;
};
struct DimensionMismatch : Error {
    using Error::Error;
};
struct NonFiniteWeight : Error {
    using Error::Error;
};
struct LabelOutOfRange : Error {
    using Error::Error;
};
struct KOutOfRange : Error {
    using Error::Error;
};
struct InvalidItem : Error {
    using Error::Error;
};
struct NoFeasibleAssignment : Error {
    using Error::Error;
};
struct EmptyDomain : Error {
    using Error::Error;
};
struct LayerNotMonitorable : Error {
    using Error::Error;
};
struct BadParameters : Error {
    using Error::Error;
};
struct EmptyDataset : Error {
    using Error::Error;
};

/// Stable name used in machine-readable error JSON on stderr.
const char* error_kind(const Error& e);

} // namespace depkit
