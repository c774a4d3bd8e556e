#ifndef SPECSHAPE_ERRORS_HPP
#define SPECSHAPE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace specshape {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid argument values (bad family parameters, K < 1, R < 1, ...).
class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& msg) : Error(msg) {}
};

/// Caller violated an interface contract (shape mismatch, empty batch, ...).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

/// Structurally valid input that the operation cannot act on
/// (isolated node under the normalized Laplacian, empty band, before <= 0).
class DegenerateInputError : public Error {
public:
    explicit DegenerateInputError(const std::string& msg) : Error(msg) {}
};

/// Request exceeds what this code path supports (dense decomposition above
/// the size threshold; use the polynomial path instead).
class CapabilityError : public Error {
public:
    explicit CapabilityError(const std::string& msg) : Error(msg) {}
};

/// Malformed persisted data (corrupt JSON/CSV); message names the path.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

/// Filesystem failure (unwritable directory, missing file).
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

} // namespace specshape

#endif
