#pragma once

#include <stdexcept>
#include <string>

namespace uniview {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or dimension mismatch between tensors/images.
struct DimensionError : Error {
    using Error::Error;
};

// Bad user-facing configuration (flag values, step counts, missing inputs).
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem / serialization failures.
struct IoError : Error {
    using Error::Error;
};

// Database integrity violations (duplicate keys, instance-range overlap).
struct IntegrityError : Error {
    using Error::Error;
};

// Malformed response from the remote classifier; carries the raw payload.
struct ProtocolError : Error {
    std::string payload;
    ProtocolError(const std::string& msg, std::string raw)
        : Error(msg), payload(std::move(raw)) {}
};

// Reference retrieval could not produce a record (empty bucket, endpoint down).
struct RetrievalError : Error {
    using Error::Error;
};

// Non-finite values or other numeric breakdown.
struct NumericError : Error {
    using Error::Error;
};

// A hard contract was broken (e.g. a frozen parameter received an update).
struct ContractViolation : Error {
    using Error::Error;
};

// CLI exit-code mapping: 0 success, 2 configuration, 3 I/O,
// 4 retrieval-unavailable, 5 numeric failure.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
    if (dynamic_cast<const IntegrityError*>(&e) != nullptr) return 2;
    if (dynamic_cast<const IoError*>(&e) != nullptr) return 3;
    if (dynamic_cast<const RetrievalError*>(&e) != nullptr) return 4;
    if (dynamic_cast<const ProtocolError*>(&e) != nullptr) return 4;
    return 5;
}

}  // namespace uniview
