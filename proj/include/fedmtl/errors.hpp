#pragma once

#include <stdexcept>
#include <string>

namespace fedmtl {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatches.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration: bad partition order, incompatible loss/activation,
// impossible hyperparameters.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input files (datasets, configs, checkpoints).
struct ParseError : Error {
    using Error::Error;
};

// Filesystem failures carrying the offending path.
struct IoError : Error {
    using Error::Error;
};

// A client's local training produced non-finite parameters.
struct DivergedError : Error {
    int client_id;
    DivergedError(int id, const std::string& msg) : Error(msg), client_id(id) {}
};

} // namespace fedmtl
