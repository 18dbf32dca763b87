#pragma once

#include <stdexcept>
#include <string>

namespace wbforge {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input failed validation (wrong shape, out-of-range index, unknown tag).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Input is well-formed but numerically degenerate (zero norm, zero std, zero bbox).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

class BehindCameraError : public Error {
public:
    using Error::Error;
};

class InsufficientViewsError : public Error {
public:
    using Error::Error;
};

class DegenerateGeometryError : public Error {
public:
    using Error::Error;
};

// File or record does not match the expected schema version or layout.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Lookup of an id that is not in the collection.
class NotFoundError : public Error {
public:
    using Error::Error;
};

} // namespace wbforge
